use std::path::{Path, PathBuf};

use serde::Serialize;

use riscell::array::{self, AngularGrid, ArrayGeometry, Direction};
use riscell::biasctl::{self, BiasLut, SlopeDomain};
use riscell::calibration::{
    self, CalibrationOptions, CalibrationReport, CalibrationTarget, FitResult, MeasuredCurve,
};
use riscell::circuit::{linspace, BiasPoint, Drive, DEFAULT_SLOPE_STEP, ETA0};
use riscell::model_file::{write_atomic, ModelFile, Provenance};
use riscell::touchstone;

use crate::{
    BeamArgs, CalibrateArgs, CliError, CliResult, FitArgs, Format, LutArgs, SimArgs, SolveArgs,
};

fn load_model(path: Option<&Path>) -> CliResult<ModelFile> {
    Ok(match path {
        Some(p) => ModelFile::load(p)?,
        None => ModelFile::shipped(),
    })
}

fn load_seed(path: Option<&Path>) -> CliResult<ModelFile> {
    Ok(match path {
        Some(p) => ModelFile::load(p)?,
        None => ModelFile::shipped_seed(),
    })
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(riscell::Error::from)?;
    s.push('\n');
    Ok(s)
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    print!("{}", to_json(value)?);
    Ok(())
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    Ok(write_atomic(path, contents.as_bytes())?)
}

fn infer_format(path: &Path, explicit: Option<Format>) -> Format {
    explicit.unwrap_or_else(|| {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
            Some(e) if e == "json" => Format::Json,
            _ => Format::Csv,
        }
    })
}

fn pair(text: &str, what: &str) -> CliResult<(f64, f64)> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => match (a.parse::<f64>(), b.parse::<f64>()) {
            (Ok(a), Ok(b)) if a.is_finite() && b.is_finite() => Ok((a, b)),
            _ => Err(CliError::Usage(format!("{what} `{text}` is not a number pair"))),
        },
        _ => Err(CliError::Usage(format!("{what} `{text}` must be two comma-separated numbers"))),
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn options(
    restarts: Option<usize>,
    max_iterations: Option<usize>,
    rng_seed: Option<u64>,
    fix: &[calibration::CircuitParam],
) -> CalibrationOptions {
    let mut o = CalibrationOptions::default();
    if let Some(r) = restarts {
        o.restarts = r;
    }
    if let Some(m) = max_iterations {
        o.max_iterations = m;
    }
    if let Some(s) = rng_seed {
        o.rng_seed = s;
    }
    o.fixed = fix.to_vec();
    o
}

#[derive(Serialize)]
struct SimSummary {
    f0_hz: f64,
    c_d1_f: f64,
    c_d2_f: f64,
    phase_deg: f64,
    slope_deg_per_mhz: f64,
    loss_db: f64,
}

pub fn sim(a: SimArgs) -> CliResult<()> {
    let file = load_model(a.model.as_deref())?;
    let model = &file.model;
    let drive = |c: Option<f64>, v: Option<f64>, name: &str| match (c, v) {
        (Some(c), None) => Ok(Drive::Capacitance(c)),
        (None, Some(v)) => Ok(Drive::Voltage(v)),
        _ => Err(CliError::Usage(format!("give exactly one of --cd{name} or --v{name}"))),
    };
    let bias = BiasPoint {
        d1: drive(a.cd1, a.v1, "1")?,
        d2: drive(a.cd2, a.v2, "2")?,
    };
    let (c1, c2) = model.resolve(&bias)?;
    let grid = linspace(
        a.fstart.unwrap_or(model.band.start),
        a.fstop.unwrap_or(model.band.stop),
        a.points,
    );
    let response = model.sweep(&bias, &grid)?;
    let summary = SimSummary {
        f0_hz: model.f0,
        c_d1_f: c1,
        c_d2_f: c2,
        phase_deg: model.phase_at(c1, c2, model.f0),
        slope_deg_per_mhz: model.phase_slope_at(c1, c2, model.f0, DEFAULT_SLOPE_STEP)?,
        loss_db: model.loss_at(c1, c2, model.f0),
    };
    if let Some(out) = &a.out {
        let text = match a.format {
            Format::Csv => response.to_csv(),
            Format::Json => to_json(&response.table())?,
        };
        write(out, &text)?;
    }
    print_json(&summary)
}

pub fn calibrate(a: CalibrateArgs) -> CliResult<()> {
    let targets: Vec<CalibrationTarget> = if a.targets == "default" {
        calibration::default_targets()
    } else {
        let text = std::fs::read_to_string(&a.targets).map_err(riscell::Error::from)?;
        serde_json::from_str(&text).map_err(|e| riscell::Error::Schema(e.to_string()))?
    };
    let seed = load_seed(a.seed.as_deref())?;
    let opts = options(a.restarts, a.max_iterations, a.rng_seed, &a.fix);
    let result = calibration::calibrate(&targets, &seed.model, &opts)?;

    let converged = result.converged;
    let cost = result.cost;
    let mut notes = vec![format!("weighted cost {cost}"), format!("converged {converged}")];
    for r in result.residuals.iter().filter(|r| !r.within_tolerance) {
        notes.push(format!(
            "outside tolerance: {} (target {}, achieved {})",
            r.label.as_deref().unwrap_or("unlabeled"),
            r.assigned_value,
            r.achieved
        ));
    }
    let out_file = ModelFile {
        provenance: Provenance {
            source: "riscell calibrate".into(),
            calibration_report: a.report.as_deref().map(file_name),
            notes,
        },
        model: result.model.clone(),
        ..seed.clone()
    };
    let report = CalibrationReport {
        targets,
        seed: seed.model,
        options: opts,
        result,
    };
    if let Some(path) = &a.report {
        write(path, &to_json(&report)?)?;
    }
    out_file.save(&a.out)?;
    print_json(&serde_json::json!({
        "cost": cost,
        "converged": converged,
        "residuals": report.result.residuals,
    }))?;
    if converged {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!(
            "calibration did not meet every tolerance (cost {cost})"
        )))
    }
}

#[derive(Serialize)]
struct SolveOutput {
    domain: SlopeDomain,
    c_d1_f: f64,
    c_d2_f: f64,
    #[serde(flatten)]
    row: biasctl::SolvedBias,
}

pub fn solve(a: SolveArgs) -> CliResult<()> {
    let file = load_model(a.model.as_deref())?;
    let domain = SlopeDomain::of(a.domain);
    let row = biasctl::solve_bias(&file.model, &domain, a.phase, file.model.f0)?;
    let (c_d1_f, c_d2_f) = domain.capacitances(row.capacitance);
    print_json(&SolveOutput {
        domain,
        c_d1_f,
        c_d2_f,
        row,
    })
}

pub fn lut(a: LutArgs) -> CliResult<()> {
    let file = load_model(a.model.as_deref())?;
    let domain = SlopeDomain::of(a.domain);
    let phases = biasctl::phase_grid(a.from, a.to, a.step)?;
    let table = biasctl::build_lut(&file.model, &domain, &phases)?;
    let text = match infer_format(&a.out, a.format) {
        Format::Csv => table.to_csv(),
        Format::Json => to_json(&table)?,
    };
    write(&a.out, &text)?;
    print_json(&serde_json::json!({
        "domain": domain,
        "rows": table.rows.len(),
        "out": a.out,
    }))
}

#[derive(Serialize)]
struct BeamSummary {
    domain: SlopeDomain,
    max_phase_error_deg: f64,
    mean_phase_error_deg: f64,
    clamped_elements: usize,
    peaks: Vec<Peak>,
}

#[derive(Serialize)]
struct Peak {
    f_hz: f64,
    theta_deg: f64,
}

pub fn beam(a: BeamArgs) -> CliResult<()> {
    let file = load_model(a.model.as_deref())?;
    let model = &file.model;
    let lut_text = std::fs::read_to_string(&a.lut).map_err(riscell::Error::from)?;
    let table: BiasLut =
        serde_json::from_str(&lut_text).map_err(|e| riscell::Error::Schema(format!("{}: {e}", a.lut.display())))?;
    let geometry = ArrayGeometry::new(a.nx, a.ny, a.pitch)?;
    let (ti, pi) = pair(&a.incident, "--incident")?;
    let (td, pd) = pair(&a.desired, "--desired")?;
    let incident = Direction::from_angles(ti, pi)?;
    let desired = Direction::from_angles(td, pd)?;
    let targets = array::phase_gradient(&geometry, &incident, &desired, model.f0)?;
    let config = array::configure(&geometry, &incident, &desired, &table, &targets)?;

    let fmin = a.fmin.unwrap_or(model.f0 - 100e6);
    let fmax = a.fmax.unwrap_or(model.f0 + 100e6);
    if a.fpoints == 0 || fmax < fmin {
        return Err(CliError::Usage("need --fpoints >= 1 and --fmin <= --fmax".into()));
    }
    let freqs = linspace(fmin, fmax, a.fpoints);
    let grid = AngularGrid::cut(pd, array::DEFAULT_SCAN_LIMIT_DEG, a.scan_step)?;
    let mut points = Vec::new();
    let mut peaks = Vec::new();
    for &f in &freqs {
        let p = array::array_factor(&config, model, f, &grid)?;
        if let Some(theta_deg) = array::peak_theta(&p) {
            peaks.push(Peak { f_hz: f, theta_deg });
        }
        points.extend(p);
    }

    let config_path = a.config.clone().unwrap_or_else(|| {
        let mut p: PathBuf = a.out.clone();
        p.set_extension("config.json");
        p
    });
    write(&config_path, &to_json(&config)?)?;
    write(&a.out, &array::pattern_csv(&points))?;
    print_json(&BeamSummary {
        domain: config.domain,
        max_phase_error_deg: config.max_error,
        mean_phase_error_deg: config.mean_error,
        clamped_elements: config.clamped,
        peaks,
    })
}

#[derive(Serialize)]
struct FitReport {
    files: Vec<String>,
    biases: Vec<BiasPoint>,
    /// Samples passed through unchanged by renormalization (open circuits).
    singular_samples: Vec<(String, usize)>,
    seed: riscell::circuit::UnitCellModel,
    options: CalibrationOptions,
    result: FitResult,
}

pub fn fit(a: FitArgs) -> CliResult<()> {
    if a.s1p.len() != a.bias.len() {
        return Err(CliError::Usage(format!(
            "{} files but {} --bias pairs",
            a.s1p.len(),
            a.bias.len()
        )));
    }
    let seed = load_seed(a.seed.as_deref())?;
    let mut curves = Vec::new();
    let mut singular = Vec::new();
    for (path, bias) in a.s1p.iter().zip(&a.bias) {
        let text = std::fs::read_to_string(path).map_err(riscell::Error::from)?;
        let data = touchstone::parse_touchstone(&text)?;
        let renorm = touchstone::renormalize(&data, ETA0)?;
        singular.extend(renorm.singular.iter().map(|&i| (file_name(path), i)));
        let (x1, x2) = pair(bias, "--bias")?;
        let bias = if a.capacitance {
            BiasPoint::capacitances(x1, x2)
        } else {
            BiasPoint::volts(x1, x2)
        };
        curves.push(MeasuredCurve {
            response: renorm.data.to_response()?,
            bias,
        });
    }
    let opts = options(a.restarts, a.max_iterations, a.rng_seed, &a.fix);
    let result = calibration::fit_to_response(&curves, &seed.model, &opts)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let converged = result.converged;
    let rms = result.rms_error;
    let out_file = ModelFile {
        provenance: Provenance {
            source: "riscell fit".into(),
            calibration_report: a.report.as_deref().map(file_name),
            notes: vec![format!("rms complex reflection error {rms}")],
        },
        model: result.model.clone(),
        ..seed.clone()
    };
    let report = FitReport {
        files: a.s1p.iter().map(|p| file_name(p)).collect(),
        biases: curves.iter().map(|c| c.bias).collect(),
        singular_samples: singular,
        seed: seed.model,
        options: opts,
        result,
    };
    if let Some(path) = &a.report {
        write(path, &to_json(&report)?)?;
    }
    out_file.save(&a.out)?;
    print_json(&serde_json::json!({
        "rms_error": rms,
        "converged": converged,
        "warnings": report.result.warnings,
    }))?;
    if converged {
        Ok(())
    } else {
        Err(CliError::NotConverged(format!("fit RMS error {rms} above tolerance")))
    }
}
