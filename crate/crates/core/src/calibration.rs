//! Circuit parameter extraction.
//!
//! Two entry points share one optimizer: [`calibrate`] fits the circuit to a
//! handful of scalar operating points (phase, slope magnitude, loss at given
//! varactor capacitances), and [`fit_to_response`] fits it to sampled
//! reflection curves. Both search the log of the positive circuit parameters
//! with a restarted Nelder-Mead simplex.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{BiasPoint, FrequencyResponse, UnitCellModel, DEFAULT_SLOPE_STEP};
use crate::error::{Error, Result};
use crate::phase::wrap_deg;
use crate::lm::{self, LmOptions};
use crate::simplex::{self, SimplexOptions};

pub const PICO: f64 = 1e-12;

/// Normalization applied to each residual kind before squaring.
pub const PHASE_SCALE_DEG: f64 = 10.0;
pub const SLOPE_SCALE_DEG_PER_MHZ: f64 = 1.0;
pub const LOSS_SCALE_DB: f64 = 0.5;

/// Lower clamp applied to zero resistances so they can enter log space.
const MIN_RESISTANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    /// Reflection phase in degrees.
    Phase,
    /// |phase slope| in degrees per MHz.
    SlopeMagnitude,
    /// Reflection loss in dB.
    Loss,
}

impl TargetKind {
    fn scale(self) -> f64 {
        match self {
            TargetKind::Phase => PHASE_SCALE_DEG,
            TargetKind::SlopeMagnitude => SLOPE_SCALE_DEG_PER_MHZ,
            TargetKind::Loss => LOSS_SCALE_DB,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTarget {
    /// Dog-bone varactor capacitance (F).
    pub c_d1: f64,
    /// Patch varactor capacitance (F).
    pub c_d2: f64,
    /// Evaluation frequency (Hz).
    pub f: f64,
    pub kind: TargetKind,
    pub value: f64,
    pub weight: f64,
    pub tolerance: f64,
    /// Targets sharing a group may have their values exchanged; the fit
    /// keeps whichever assignment costs less.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exchange_group: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl CalibrationTarget {
    pub fn new(c_d1: f64, c_d2: f64, f: f64, kind: TargetKind, value: f64, tolerance: f64) -> Self {
        Self {
            c_d1,
            c_d2,
            f,
            kind,
            value,
            weight: 1.0,
            tolerance,
            exchange_group: None,
            label: None,
        }
    }

    fn labeled(mut self, label: &str) -> Self {
        self.label = Some(label.to_string());
        self
    }

    fn grouped(mut self, group: u32) -> Self {
        self.exchange_group = Some(group);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidArgument(format!("calibration target: {reason}"));
        if !(self.c_d1 > 0.0 && self.c_d2 > 0.0 && self.c_d1.is_finite() && self.c_d2.is_finite()) {
            return Err(bad("capacitances must be finite and > 0"));
        }
        if !(self.f > 0.0 && self.f.is_finite()) {
            return Err(bad("frequency must be > 0"));
        }
        if !(self.weight > 0.0 && self.weight.is_finite()) {
            return Err(bad("weight must be > 0"));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(bad("tolerance must be > 0"));
        }
        if !self.value.is_finite() {
            return Err(bad("value must be finite"));
        }
        Ok(())
    }

    /// Model value for this target's kind and operating point.
    pub fn evaluate(&self, model: &UnitCellModel) -> f64 {
        match self.kind {
            TargetKind::Phase => model.phase_at(self.c_d1, self.c_d2, self.f),
            TargetKind::SlopeMagnitude => model
                .phase_slope_at(self.c_d1, self.c_d2, self.f, DEFAULT_SLOPE_STEP)
                .map(f64::abs)
                .unwrap_or(f64::NAN),
            TargetKind::Loss => model.loss_at(self.c_d1, self.c_d2, self.f),
        }
    }

    fn raw_residual(&self, achieved: f64, value: f64) -> f64 {
        match self.kind {
            TargetKind::Phase => wrap_deg(achieved - value),
            _ => achieved - value,
        }
    }
}

/// Dog-bone domain operating points.
pub const DOGBONE_CD2: f64 = 5.0 * PICO;
pub const DOGBONE_CD1_MINUS90: f64 = 2.83 * PICO;
pub const DOGBONE_CD1_PLUS90: f64 = 2.68 * PICO;
/// Patch domain operating points.
pub const PATCH_CD1: f64 = 1.1 * PICO;
pub const PATCH_CD2_LOW: f64 = 0.5 * PICO;
pub const PATCH_CD2_HIGH: f64 = 1.45 * PICO;
pub const F0: f64 = 2.5e9;

pub const DOGBONE_MID_CD1: f64 = 0.5 * (DOGBONE_CD1_MINUS90 + DOGBONE_CD1_PLUS90);
pub const PATCH_MID_CD2: f64 = 0.5 * (PATCH_CD2_LOW + PATCH_CD2_HIGH);

pub const S_MAX: f64 = 9.0;
pub const S_MIN: f64 = 0.9;

/// The reported operating points of the two-slope cell at 2.5 GHz.
pub fn default_targets() -> Vec<CalibrationTarget> {
    use TargetKind::*;
    vec![
        CalibrationTarget::new(DOGBONE_CD1_MINUS90, DOGBONE_CD2, F0, Phase, -90.0, 5.0)
            .labeled("dogbone phase -90"),
        CalibrationTarget::new(DOGBONE_CD1_PLUS90, DOGBONE_CD2, F0, Phase, 90.0, 5.0)
            .labeled("dogbone phase +90"),
        CalibrationTarget::new(DOGBONE_MID_CD1, DOGBONE_CD2, F0, SlopeMagnitude, S_MAX, 0.1 * S_MAX)
            .labeled("dogbone slope"),
        CalibrationTarget::new(PATCH_CD1, PATCH_CD2_LOW, F0, Phase, 90.0, 5.0)
            .labeled("patch phase at 0.5 pF")
            .grouped(1),
        CalibrationTarget::new(PATCH_CD1, PATCH_CD2_HIGH, F0, Phase, -90.0, 5.0)
            .labeled("patch phase at 1.45 pF")
            .grouped(1),
        CalibrationTarget::new(PATCH_CD1, PATCH_MID_CD2, F0, SlopeMagnitude, S_MIN, 0.1 * S_MIN)
            .labeled("patch slope"),
        CalibrationTarget::new(DOGBONE_MID_CD1, DOGBONE_CD2, F0, Loss, 2.0, 0.5)
            .labeled("dogbone loss"),
        CalibrationTarget::new(PATCH_CD1, PATCH_MID_CD2, F0, Loss, 0.3, 0.2).labeled("patch loss"),
    ]
}

/// Circuit parameters the optimizer may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CircuitParam {
    R1,
    L1,
    C1,
    R2,
    L2,
    C2,
    L0,
    Rs1,
    Rs2,
}

impl CircuitParam {
    pub const ALL: [CircuitParam; 9] = [
        CircuitParam::R1,
        CircuitParam::L1,
        CircuitParam::C1,
        CircuitParam::R2,
        CircuitParam::L2,
        CircuitParam::C2,
        CircuitParam::L0,
        CircuitParam::Rs1,
        CircuitParam::Rs2,
    ];

    pub fn get(self, m: &UnitCellModel) -> f64 {
        match self {
            CircuitParam::R1 => m.branch1.r,
            CircuitParam::L1 => m.branch1.l,
            CircuitParam::C1 => m.branch1.c,
            CircuitParam::R2 => m.branch2.r,
            CircuitParam::L2 => m.branch2.l,
            CircuitParam::C2 => m.branch2.c,
            CircuitParam::L0 => m.l0,
            CircuitParam::Rs1 => m.d1.r_s,
            CircuitParam::Rs2 => m.d2.r_s,
        }
    }

    pub fn set(self, m: &mut UnitCellModel, v: f64) {
        match self {
            CircuitParam::R1 => m.branch1.r = v,
            CircuitParam::L1 => m.branch1.l = v,
            CircuitParam::C1 => m.branch1.c = v,
            CircuitParam::R2 => m.branch2.r = v,
            CircuitParam::L2 => m.branch2.l = v,
            CircuitParam::C2 => m.branch2.c = v,
            CircuitParam::L0 => m.l0 = v,
            CircuitParam::Rs1 => m.d1.r_s = v,
            CircuitParam::Rs2 => m.d2.r_s = v,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CircuitParam::R1 => "r1",
            CircuitParam::L1 => "l1",
            CircuitParam::C1 => "c1",
            CircuitParam::R2 => "r2",
            CircuitParam::L2 => "l2",
            CircuitParam::C2 => "c2",
            CircuitParam::L0 => "l0",
            CircuitParam::Rs1 => "rs1",
            CircuitParam::Rs2 => "rs2",
        }
    }

    fn is_resistance(self) -> bool {
        matches!(
            self,
            CircuitParam::R1 | CircuitParam::R2 | CircuitParam::Rs1 | CircuitParam::Rs2
        )
    }
}

impl std::str::FromStr for CircuitParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        CircuitParam::ALL
            .into_iter()
            .find(|p| p.name() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown circuit parameter `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationOptions {
    /// Independent simplex runs; run 0 starts at the seed, the rest at
    /// log-uniform perturbations of it.
    pub restarts: usize,
    /// Simplex iteration budget per run. Zero disables the search.
    pub max_iterations: usize,
    /// Re-seeded simplex rounds around each run's best point.
    pub polish_rounds: usize,
    /// Levenberg-Marquardt iterations applied to each run's best point.
    pub refine_iterations: usize,
    /// Half-width of the log-uniform scatter of restart seeds.
    pub spread: f64,
    /// Initial simplex edge in log space.
    pub step: f64,
    pub rng_seed: u64,
    pub f_tol: f64,
    pub x_tol: f64,
    /// Parameters held at their seed values.
    pub fixed: Vec<CircuitParam>,
    /// RMS |ΔΓ| below which a response fit counts as converged.
    pub fit_rms_tolerance: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            max_iterations: 6000,
            polish_rounds: 6,
            refine_iterations: 10000,
            spread: 0.5,
            step: 0.1,
            rng_seed: 0x5eed_2024,
            f_tol: 1e-22,
            x_tol: 1e-13,
            fixed: Vec::new(),
            fit_rms_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetResidual {
    pub label: Option<String>,
    pub kind: TargetKind,
    /// Value the target was matched against (after any exchange).
    pub assigned_value: f64,
    pub achieved: f64,
    /// Achieved minus assigned, phases wrapped into (-180, 180].
    pub residual: f64,
    /// Residual divided by the per-kind scale.
    pub normalized: f64,
    pub tolerance: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub index: usize,
    pub cost: f64,
    pub iterations: usize,
    /// Lowest cost over restarts `0..=index`.
    pub best_so_far: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub model: UnitCellModel,
    pub residuals: Vec<TargetResidual>,
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
    pub restarts: Vec<RestartSummary>,
    pub best_restart: usize,
}

/// Everything needed to reproduce and audit a calibration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub targets: Vec<CalibrationTarget>,
    pub seed: UnitCellModel,
    pub options: CalibrationOptions,
    pub result: CalibrationResult,
}

/// Per-target residuals with exchange groups resolved to their cheapest
/// assignment.
pub fn evaluate_targets(model: &UnitCellModel, targets: &[CalibrationTarget]) -> Vec<TargetResidual> {
    let achieved: Vec<f64> = targets.iter().map(|t| t.evaluate(model)).collect();
    let mut assigned: Vec<f64> = targets.iter().map(|t| t.value).collect();

    let mut groups: Vec<u32> = targets.iter().filter_map(|t| t.exchange_group).collect();
    groups.sort_unstable();
    groups.dedup();
    for g in groups {
        let members: Vec<usize> = (0..targets.len())
            .filter(|&i| targets[i].exchange_group == Some(g))
            .collect();
        let values: Vec<f64> = members.iter().map(|&i| targets[i].value).collect();
        let mut best: Option<(f64, Vec<usize>)> = None;
        for perm in permutations(members.len()) {
            let c: f64 = members
                .iter()
                .zip(&perm)
                .map(|(&i, &p)| {
                    let t = &targets[i];
                    let r = t.raw_residual(achieved[i], values[p]) / t.kind.scale();
                    t.weight * r * r
                })
                .sum();
            let c = if c.is_nan() { f64::INFINITY } else { c };
            if best.as_ref().map_or(true, |(bc, _)| c < *bc) {
                best = Some((c, perm));
            }
        }
        if let Some((_, perm)) = best {
            for (&i, &p) in members.iter().zip(&perm) {
                assigned[i] = values[p];
            }
        }
    }

    targets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let residual = t.raw_residual(achieved[i], assigned[i]);
            TargetResidual {
                label: t.label.clone(),
                kind: t.kind,
                assigned_value: assigned[i],
                achieved: achieved[i],
                residual,
                normalized: residual / t.kind.scale(),
                tolerance: t.tolerance,
                within_tolerance: residual.abs() <= t.tolerance,
            }
        })
        .collect()
}

fn weighted_cost(targets: &[CalibrationTarget], residuals: &[TargetResidual]) -> f64 {
    let c: f64 = targets
        .iter()
        .zip(residuals)
        .map(|(t, r)| t.weight * r.normalized * r.normalized)
        .sum();
    if c.is_nan() {
        f64::INFINITY
    } else {
        c
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out.sort();
    out
}

/// Maps between a model and the log of its free parameters.
struct Parameterization {
    free: Vec<CircuitParam>,
    base: UnitCellModel,
}

impl Parameterization {
    fn new(seed: &UnitCellModel, fixed: &[CircuitParam]) -> Self {
        let mut base = seed.clone();
        for p in CircuitParam::ALL {
            if p.is_resistance() && p.get(&base) < MIN_RESISTANCE {
                p.set(&mut base, MIN_RESISTANCE);
            }
        }
        let free = CircuitParam::ALL
            .into_iter()
            .filter(|p| !fixed.contains(p))
            .collect();
        Self { free, base }
    }

    fn encode(&self, m: &UnitCellModel) -> Vec<f64> {
        self.free.iter().map(|p| p.get(m).ln()).collect()
    }

    fn decode(&self, x: &[f64]) -> Option<UnitCellModel> {
        let mut m = self.base.clone();
        for (p, &xi) in self.free.iter().zip(x) {
            let v = xi.exp();
            if !(v.is_finite() && v > 0.0) {
                return None;
            }
            p.set(&mut m, v);
        }
        Some(m)
    }
}

struct RunOutcome {
    x: Vec<f64>,
    value: f64,
    iterations: usize,
}

/// Restarted simplex search shared by both fitting modes. Restart 0 starts
/// at `x0`; the others at seeded log-uniform perturbations of it.
fn restarted_search<R>(residuals: R, x0: &[f64], opts: &CalibrationOptions) -> Vec<RunOutcome>
where
    R: Fn(&[f64]) -> Option<Vec<f64>> + Sync,
{
    let objective = |x: &[f64]| match residuals(x) {
        Some(r) => {
            let v: f64 = r.iter().map(|a| a * a).sum();
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        }
        None => f64::INFINITY,
    };
    let starts: Vec<Vec<f64>> = (0..opts.restarts.max(1))
        .map(|k| {
            if k == 0 {
                x0.to_vec()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed.wrapping_add(k as u64));
                x0.iter()
                    .map(|&x| x + rng.gen_range(-opts.spread..=opts.spread))
                    .collect()
            }
        })
        .collect();

    let simplex_opts = SimplexOptions {
        max_iterations: opts.max_iterations,
        f_tol: opts.f_tol,
        x_tol: opts.x_tol,
    };
    let indexed: Vec<(usize, Vec<f64>)> = starts.into_iter().enumerate().collect();
    crate::par::map(&indexed, |(k, start)| {
        let n = start.len();
        let mut r = simplex::minimize(&objective, start, &vec![opts.step; n], &simplex_opts);
        let mut iterations = r.iterations;
        if opts.max_iterations > 0 {
            // Polish from randomly oriented simplices so that a long curved
            // valley is not always probed along the same axes.
            let mut rng = ChaCha8Rng::seed_from_u64(opts.rng_seed ^ (0x9e37_79b9 + *k as u64));
            for _ in 0..opts.polish_rounds {
                let verts = rotated_simplex(&r.x, opts.step, &mut rng);
                let p = simplex::minimize_from(&objective, verts, &simplex_opts);
                iterations += p.iterations;
                if p.value < r.value {
                    r = p;
                } else if p.value == r.value {
                    break;
                }
            }
        }
        let mut x = r.x;
        let mut value = r.value;
        if opts.max_iterations > 0 && value > 0.0 {
            let lm_opts = LmOptions {
                max_iterations: opts.refine_iterations,
                ..LmOptions::default()
            };
            let refined = lm::minimize(&residuals, &x, &lm_opts);
            iterations += refined.iterations;
            // Compare through the same objective the simplex saw.
            let v = objective(&refined.x);
            if v < value {
                x = refined.x;
                value = v;
            }
        }
        RunOutcome { x, value, iterations }
    })
}

/// Vertices `x, x + step·q_1, ..., x + step·q_n` for a random orthonormal
/// basis `q`.
fn rotated_simplex(x: &[f64], step: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for q in &basis {
            let d: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-3 {
            basis.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    std::iter::once(x.to_vec())
        .chain(basis.iter().map(|q| x.iter().zip(q).map(|(a, b)| a + step * b).collect()))
        .collect()
}

fn pick_best(runs: &[RunOutcome], total_weight: f64) -> (usize, Vec<RestartSummary>) {
    let mut best_idx = 0;
    let mut summaries = Vec::with_capacity(runs.len());
    let mut best_so_far = f64::INFINITY;
    for (i, r) in runs.iter().enumerate() {
        if r.value < runs[best_idx].value {
            best_idx = i;
        }
        best_so_far = best_so_far.min(r.value * total_weight);
        summaries.push(RestartSummary {
            index: i,
            cost: r.value * total_weight,
            iterations: r.iterations,
            best_so_far,
        });
    }
    (best_idx, summaries)
}

/// Fits the free circuit parameters of `seed` to scalar operating-point
/// targets. Non-convergence is reported through `converged`, not an error.
pub fn calibrate(
    targets: &[CalibrationTarget],
    seed: &UnitCellModel,
    opts: &CalibrationOptions,
) -> Result<CalibrationResult> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("at least one calibration target is required".into()));
    }
    for t in targets {
        t.validate()?;
    }
    seed.validate()?;

    let param = Parameterization::new(seed, &opts.fixed);
    // The search sees weights normalized to unit sum so that rescaling every
    // weight leaves the search path unchanged.
    let total_weight: f64 = targets.iter().map(|t| t.weight).sum();
    let scaled: Vec<CalibrationTarget> = targets
        .iter()
        .map(|t| CalibrationTarget {
            weight: t.weight / total_weight,
            ..t.clone()
        })
        .collect();
    let residuals = |x: &[f64]| {
        let m = param.decode(x)?;
        Some(
            scaled
                .iter()
                .zip(evaluate_targets(&m, &scaled))
                .map(|(t, r)| t.weight.sqrt() * r.normalized)
                .collect::<Vec<f64>>(),
        )
    };

    let x0 = param.encode(&param.base);
    let (model, iterations, summaries, best_restart) = if opts.max_iterations == 0 {
        let value = weighted_cost(&scaled, &evaluate_targets(seed, &scaled));
        let summary = RestartSummary {
            index: 0,
            cost: value * total_weight,
            iterations: 0,
            best_so_far: value * total_weight,
        };
        (seed.clone(), 0, vec![summary], 0)
    } else {
        let runs = restarted_search(&residuals, &x0, opts);
        let (best, summaries) = pick_best(&runs, total_weight);
        let model = param
            .decode(&runs[best].x)
            .ok_or_else(|| Error::Numerical("optimizer left the representable range".into()))?;
        let iterations = runs.iter().map(|r| r.iterations).sum();
        (model, iterations, summaries, best)
    };

    for p in CircuitParam::ALL {
        if opts.max_iterations > 0 && !opts.fixed.contains(&p) {
            debug_assert!(p.get(&model) > 0.0);
        }
    }
    let residuals = evaluate_targets(&model, targets);
    let cost = weighted_cost(targets, &residuals);
    let converged = residuals.iter().all(|r| r.within_tolerance);
    Ok(CalibrationResult {
        model,
        residuals,
        cost,
        converged,
        iterations,
        restarts: summaries,
        best_restart,
    })
}

/// One measured or simulated reflection curve and the bias it was taken at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredCurve {
    pub response: FrequencyResponse,
    pub bias: BiasPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: UnitCellModel,
    /// Root-mean-square complex reflection error over every sample.
    pub rms_error: f64,
    /// Mean squared complex reflection error.
    pub cost: f64,
    pub converged: bool,
    pub iterations: usize,
    pub restarts: Vec<RestartSummary>,
    pub best_restart: usize,
    pub warnings: Vec<String>,
}

pub const MIN_SAMPLES_PER_CURVE: usize = 10;

/// Fits the circuit to sampled reflection curves, minimizing the mean
/// squared complex-Γ error. Curves must be referenced to the free-space
/// wave impedance.
pub fn fit_to_response(
    curves: &[MeasuredCurve],
    seed: &UnitCellModel,
    opts: &CalibrationOptions,
) -> Result<FitResult> {
    seed.validate()?;
    if curves.is_empty() {
        return Err(Error::InvalidArgument("at least one curve is required".into()));
    }
    let free = CircuitParam::ALL.len() - opts.fixed.iter().collect::<std::collections::HashSet<_>>().len();
    let total: usize = curves.iter().map(|c| c.response.len()).sum();
    if total < free {
        return Err(Error::UnderDetermined {
            samples: total,
            parameters: free,
        });
    }
    if let Some((i, c)) = curves
        .iter()
        .enumerate()
        .find(|(_, c)| c.response.len() < MIN_SAMPLES_PER_CURVE)
    {
        return Err(Error::InvalidArgument(format!(
            "curve {i} has {} samples; at least {MIN_SAMPLES_PER_CURVE} are required",
            c.response.len()
        )));
    }

    let mut warnings = Vec::new();
    let mut resolved = Vec::with_capacity(curves.len());
    for (i, c) in curves.iter().enumerate() {
        resolved.push(seed.resolve(&c.bias)?);
        for (j, s) in c.response.samples().iter().enumerate() {
            if s.gamma.norm() > 1.0 {
                warnings.push(format!(
                    "non-passive input: curve {i} sample {j} at {} Hz has |Γ| = {}",
                    s.freq,
                    s.gamma.norm()
                ));
            }
        }
    }

    let param = Parameterization::new(seed, &opts.fixed);
    let mse = |m: &UnitCellModel| -> f64 {
        let mut acc = 0.0;
        for (c, &(c1, c2)) in curves.iter().zip(&resolved) {
            for s in c.response.samples() {
                let d: Complex64 = m.reflection_at(c1, c2, s.freq) - s.gamma;
                acc += d.norm_sqr();
            }
        }
        let v = acc / total as f64;
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let norm = (total as f64).sqrt();
    let residuals = |x: &[f64]| {
        let m = param.decode(x)?;
        let mut out = Vec::with_capacity(2 * total);
        for (c, &(c1, c2)) in curves.iter().zip(&resolved) {
            for s in c.response.samples() {
                let d: Complex64 = m.reflection_at(c1, c2, s.freq) - s.gamma;
                out.push(d.re / norm);
                out.push(d.im / norm);
            }
        }
        Some(out)
    };

    let x0 = param.encode(&param.base);
    let (model, iterations, summaries, best_restart) = if opts.max_iterations == 0 {
        let v = mse(seed);
        let s = RestartSummary {
            index: 0,
            cost: v,
            iterations: 0,
            best_so_far: v,
        };
        (seed.clone(), 0, vec![s], 0)
    } else {
        let runs = restarted_search(&residuals, &x0, opts);
        let (best, summaries) = pick_best(&runs, 1.0);
        let model = param
            .decode(&runs[best].x)
            .ok_or_else(|| Error::Numerical("optimizer left the representable range".into()))?;
        (model, runs.iter().map(|r| r.iterations).sum(), summaries, best)
    };
    let cost = mse(&model);
    let rms_error = cost.sqrt();
    Ok(FitResult {
        model,
        rms_error,
        cost,
        converged: rms_error <= opts.fit_rms_tolerance,
        iterations,
        restarts: summaries,
        best_restart,
        warnings,
    })
}
