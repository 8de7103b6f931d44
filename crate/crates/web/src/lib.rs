//! Browser bindings for the shipped unit-cell model. Every export returns a
//! JSON string so the page can stay plain JavaScript.

use riscell::array::{self, AngularGrid, ArrayGeometry, Direction};
use riscell::biasctl::{self, BiasLut, DomainKind, PhaseCurve, SlopeDomain};
use riscell::calibration::PICO;
use riscell::circuit::{linspace, BiasPoint, UnitCellModel, DEFAULT_SLOPE_STEP};
use riscell::model_file::ModelFile;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_POINTS: usize = 5001;
const MAX_ELEMENTS_PER_SIDE: usize = 64;

fn model() -> UnitCellModel {
    ModelFile::shipped().model
}

fn json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn domain(name: &str) -> Result<SlopeDomain, String> {
    name.parse::<DomainKind>()
        .map(SlopeDomain::of)
        .map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Sweep {
    freq_hz: Vec<f64>,
    phase_deg: Vec<f64>,
    mag_db: Vec<f64>,
    f0_hz: f64,
    phase_at_f0_deg: f64,
    slope_deg_per_mhz: f64,
    loss_db: f64,
}

/// Reflection over the model band at the given varactor capacitances (pF).
pub fn sweep_json(cd1_pf: f64, cd2_pf: f64, points: usize) -> Result<String, String> {
    let m = model();
    if !(2..=MAX_POINTS).contains(&points) {
        return Err(format!("points must be between 2 and {MAX_POINTS}"));
    }
    let (c1, c2) = (cd1_pf * PICO, cd2_pf * PICO);
    let bias = BiasPoint::capacitances(c1, c2);
    let response = m.sweep(&bias, &m.band_grid(points)).map_err(|e| e.to_string())?;
    json(&Sweep {
        freq_hz: response.freqs(),
        phase_deg: response.wrapped_phase_deg(),
        mag_db: response.magnitude_db(),
        f0_hz: m.f0,
        phase_at_f0_deg: m.phase_at(c1, c2, m.f0),
        slope_deg_per_mhz: m
            .phase_slope_at(c1, c2, m.f0, DEFAULT_SLOPE_STEP)
            .map_err(|e| e.to_string())?,
        loss_db: m.loss_at(c1, c2, m.f0),
    })
}

#[derive(Serialize)]
struct Solve {
    domain: SlopeDomain,
    capacitance_pf: Vec<f64>,
    phase_deg: Vec<f64>,
    range_min_deg: f64,
    range_max_deg: f64,
    /// Absent when the phase is out of reach.
    solution: Option<biasctl::SolvedBias>,
    error: Option<String>,
}

/// Phase against swept capacitance for a domain, and the bias for one phase.
pub fn solve_json(domain_name: &str, phase_deg: f64) -> Result<String, String> {
    let m = model();
    let d = domain(domain_name)?;
    let curve = PhaseCurve::sample(&m, &d, m.f0, 401);
    let range = curve.range();
    let (solution, error) = match biasctl::solve_bias(&m, &d, phase_deg, m.f0) {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e.to_string())),
    };
    json(&Solve {
        domain: d,
        capacitance_pf: curve.capacitance.iter().map(|c| c / PICO).collect(),
        phase_deg: curve.phase,
        range_min_deg: range.min,
        range_max_deg: range.max,
        solution,
        error,
    })
}

#[derive(Serialize)]
struct Beam {
    theta_deg: Vec<f64>,
    /// Normalized to the peak at `f0`.
    mag_db: Vec<Vec<f64>>,
    freq_hz: Vec<f64>,
    peak_deg: Vec<f64>,
    clamped_elements: usize,
    max_phase_error_deg: f64,
}

/// Every whole-degree phase the domain reaches, one LUT row each.
fn reachable_lut(m: &UnitCellModel, d: &SlopeDomain) -> Result<BiasLut, String> {
    let range = biasctl::achievable_phase_range(m, d, m.f0);
    let phases: Vec<f64> = (-179..=180)
        .map(f64::from)
        .filter(|&p| range.locate(p).is_some())
        .collect();
    if phases.is_empty() {
        return Err(format!("the {} domain reaches no whole-degree phase", d.kind));
    }
    // Solve one at a time so an edge phase that slips past the tolerance
    // only drops its own row.
    let rows = phases
        .iter()
        .filter_map(|&p| biasctl::solve_bias(m, d, p, m.f0).ok())
        .collect::<Vec<_>>();
    let fixed_voltage = d
        .fixed_varactor(m)
        .bias_for_capacitance(d.fixed_capacitance)
        .map_err(|e| e.to_string())?;
    Ok(BiasLut {
        domain: *d,
        f0: m.f0,
        fixed_voltage,
        rows,
    })
}

/// Pattern cut of an `n`×`n` array steered to `theta_deg` under normal
/// incidence, at `f0` and at `f0 ± offset_mhz`.
pub fn beam_json(domain_name: &str, theta_deg: f64, n: usize, offset_mhz: f64) -> Result<String, String> {
    let m = model();
    let d = domain(domain_name)?;
    if !(1..=MAX_ELEMENTS_PER_SIDE).contains(&n) {
        return Err(format!("array side must be between 1 and {MAX_ELEMENTS_PER_SIDE}"));
    }
    let geometry = ArrayGeometry::new(n, n, array::DEFAULT_PITCH).map_err(|e| e.to_string())?;
    let incident = Direction::normal();
    let desired = Direction::from_angles(theta_deg, 0.0).map_err(|e| e.to_string())?;
    let targets =
        array::phase_gradient(&geometry, &incident, &desired, m.f0).map_err(|e| e.to_string())?;
    let lut = reachable_lut(&m, &d)?;
    let config = array::configure(&geometry, &incident, &desired, &lut, &targets)
        .map_err(|e| e.to_string())?;
    let grid = AngularGrid::cut(0.0, 90.0, 0.25).map_err(|e| e.to_string())?;

    let freqs = if offset_mhz > 0.0 {
        linspace(m.f0 - offset_mhz * 1e6, m.f0 + offset_mhz * 1e6, 3)
    } else {
        vec![m.f0]
    };
    let mut patterns = Vec::with_capacity(freqs.len());
    for &f in &freqs {
        patterns.push(array::array_factor(&config, &m, f, &grid).map_err(|e| e.to_string())?);
    }
    let reference = patterns[freqs.len() / 2]
        .iter()
        .map(|p| p.af.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    json(&Beam {
        theta_deg: grid.theta_deg.clone(),
        mag_db: patterns
            .iter()
            .map(|p| {
                p.iter()
                    .map(|x| 20.0 * (x.af.norm() / reference).max(1e-6).log10())
                    .collect()
            })
            .collect(),
        peak_deg: patterns.iter().filter_map(|p| array::peak_theta(p)).collect(),
        freq_hz: freqs,
        clamped_elements: config.clamped,
        max_phase_error_deg: config.max_error,
    })
}

#[wasm_bindgen]
pub fn sweep(cd1_pf: f64, cd2_pf: f64, points: usize) -> Result<String, JsValue> {
    sweep_json(cd1_pf, cd2_pf, points).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn solve(domain: &str, phase_deg: f64) -> Result<String, JsValue> {
    solve_json(domain, phase_deg).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn beam(domain: &str, theta_deg: f64, n: usize, offset_mhz: f64) -> Result<String, JsValue> {
    beam_json(domain, theta_deg, n, offset_mhz).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn sweep_reports_the_operating_point() {
        let v = parse(&sweep_json(2.83, 5.0, 101).unwrap());
        assert_eq!(v["freq_hz"].as_array().unwrap().len(), 101);
        let m = model();
        let expected = m.phase_at(2.83 * PICO, 5.0 * PICO, m.f0);
        assert_eq!(v["phase_at_f0_deg"].as_f64().unwrap(), expected);
    }

    #[test]
    fn sweep_rejects_bad_input() {
        assert!(sweep_json(2.83, 5.0, 1).is_err());
        assert!(sweep_json(-1.0, 5.0, 11).is_err());
    }

    #[test]
    fn solve_returns_curve_and_solution() {
        let v = parse(&solve_json("dogbone", -90.0).unwrap());
        assert_eq!(v["capacitance_pf"].as_array().unwrap().len(), 401);
        let achieved = v["solution"]["achieved_phase"].as_f64().unwrap();
        assert!((achieved + 90.0).abs() <= biasctl::SOLVER_TOLERANCE_DEG);
        assert!(v["error"].is_null());
    }

    #[test]
    fn unreachable_phase_is_reported_not_thrown() {
        let v = parse(&solve_json("patch", 0.0).unwrap());
        assert!(v["solution"].is_null());
        assert!(v["error"].as_str().unwrap().contains("unreachable"));
        assert!(solve_json("hole", 0.0).is_err());
    }

    #[test]
    fn beam_cut_has_one_curve_per_frequency() {
        let v = parse(&beam_json("dogbone", 20.0, 8, 100.0).unwrap());
        let theta = v["theta_deg"].as_array().unwrap().len();
        let curves = v["mag_db"].as_array().unwrap();
        assert_eq!(curves.len(), 3);
        assert!(curves.iter().all(|c| c.as_array().unwrap().len() == theta));
        assert_eq!(v["peak_deg"].as_array().unwrap().len(), 3);
        let single = parse(&beam_json("patch", 20.0, 4, 0.0).unwrap());
        assert_eq!(single["mag_db"].as_array().unwrap().len(), 1);
        assert!(beam_json("dogbone", 20.0, 0, 0.0).is_err());
    }
}
