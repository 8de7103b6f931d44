//! Bias control: inverts the circuit model to find the varactor state that
//! produces a requested reflection phase in a given slope domain, and
//! tabulates the result.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::calibration::PICO;
use crate::circuit::{fmt17, linspace, UnitCellModel, DEFAULT_SLOPE_STEP};
use crate::error::{Error, Result};
use crate::phase::{unwrap_deg, wrap_deg};
use crate::roots::bisect;
use crate::varactor::VaractorModel;

/// Grid density for phase-range scans.
pub const DEFAULT_RANGE_POINTS: usize = 1000;
/// Grid density used to locate monotonic pieces before bisection.
pub const SOLVER_GRID_POINTS: usize = 4001;
/// Achieved phase must land this close to the target (degrees).
pub const SOLVER_TOLERANCE_DEG: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    /// D2 held so the patch acts as a reflector; D1 tunes. Maximum slope.
    Dogbone,
    /// D1 detunes the dog-bone out of band; D2 tunes. Minimum slope.
    Patch,
}

impl std::str::FromStr for DomainKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dogbone" => Ok(DomainKind::Dogbone),
            "patch" => Ok(DomainKind::Patch),
            other => Err(Error::InvalidArgument(format!(
                "unknown domain `{other}` (expected dogbone or patch)"
            ))),
        }
    }
}

impl std::fmt::Display for DomainKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DomainKind::Dogbone => "dogbone",
            DomainKind::Patch => "patch",
        })
    }
}

/// A biasing regime: one varactor held fixed, the other swept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeDomain {
    pub kind: DomainKind,
    /// Capacitance of the held varactor (F).
    pub fixed_capacitance: f64,
    /// Swept capacitance interval (F), `swept_min <= swept_max`.
    pub swept_min: f64,
    pub swept_max: f64,
}

impl SlopeDomain {
    /// C_D2 = 5 pF, C_D1 in [2.5, 3.0] pF.
    pub fn dogbone() -> Self {
        Self {
            kind: DomainKind::Dogbone,
            fixed_capacitance: 5.0 * PICO,
            swept_min: 2.5 * PICO,
            swept_max: 3.0 * PICO,
        }
    }

    /// C_D1 = 1.1 pF, C_D2 in [0.5, 1.45] pF.
    pub fn patch() -> Self {
        Self {
            kind: DomainKind::Patch,
            fixed_capacitance: 1.1 * PICO,
            swept_min: 0.5 * PICO,
            swept_max: 1.45 * PICO,
        }
    }

    pub fn of(kind: DomainKind) -> Self {
        match kind {
            DomainKind::Dogbone => Self::dogbone(),
            DomainKind::Patch => Self::patch(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |c: f64| c.is_finite() && c > 0.0;
        if !(ok(self.fixed_capacitance) && ok(self.swept_min) && ok(self.swept_max)) {
            return Err(Error::InvalidArgument("domain capacitances must be finite and > 0".into()));
        }
        if self.swept_min > self.swept_max {
            return Err(Error::InvalidArgument("domain swept interval is reversed".into()));
        }
        Ok(())
    }

    /// `(C_D1, C_D2)` when the swept varactor sits at `c`.
    pub fn capacitances(&self, c: f64) -> (f64, f64) {
        match self.kind {
            DomainKind::Dogbone => (c, self.fixed_capacitance),
            DomainKind::Patch => (self.fixed_capacitance, c),
        }
    }

    pub fn swept_varactor<'a>(&self, model: &'a UnitCellModel) -> &'a VaractorModel {
        match self.kind {
            DomainKind::Dogbone => &model.d1,
            DomainKind::Patch => &model.d2,
        }
    }

    pub fn fixed_varactor<'a>(&self, model: &'a UnitCellModel) -> &'a VaractorModel {
        match self.kind {
            DomainKind::Dogbone => &model.d2,
            DomainKind::Patch => &model.d1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRange {
    pub min: f64,
    pub max: f64,
}

impl PhaseRange {
    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    /// A representative of `phase` (mod 360) inside the range, if any.
    pub fn locate(&self, phase: f64) -> Option<f64> {
        let w = wrap_deg(phase);
        let mut k = ((self.min - w) / 360.0).ceil();
        // Guard against rounding at the boundary.
        if w + 360.0 * (k - 1.0) >= self.min {
            k -= 1.0;
        }
        let candidate = w + 360.0 * k;
        (candidate <= self.max).then_some(candidate)
    }
}

/// Reflection phase at `f0` along a capacitance grid, unwrapped along
/// increasing capacitance and shifted so its middle sample is wrapped.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseCurve {
    pub capacitance: Vec<f64>,
    pub phase: Vec<f64>,
}

impl PhaseCurve {
    pub fn sample(model: &UnitCellModel, domain: &SlopeDomain, f0: f64, points: usize) -> Self {
        let caps = if domain.swept_min == domain.swept_max {
            vec![domain.swept_min]
        } else {
            linspace(domain.swept_min, domain.swept_max, points.max(2))
        };
        let wrapped: Vec<f64> = crate::par::map(&caps, |&c| {
            let (c1, c2) = domain.capacitances(c);
            model.phase_at(c1, c2, f0)
        });
        let mut phase = unwrap_deg(&wrapped);
        let mid = phase[phase.len() / 2];
        let shift = wrap_deg(mid) - mid;
        for p in &mut phase {
            *p += shift;
        }
        Self {
            capacitance: caps,
            phase,
        }
    }

    pub fn range(&self) -> PhaseRange {
        let min = self.phase.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self.phase.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        PhaseRange { min, max }
    }

    /// Index ranges `[a, b]` over which the sampled phase is monotonic,
    /// split at interior extrema.
    pub fn monotonic_pieces(&self) -> Vec<(usize, usize)> {
        let n = self.phase.len();
        if n < 2 {
            return vec![(0, 0)];
        }
        let mut pieces = Vec::new();
        let mut start = 0;
        let mut dir = 0.0f64;
        for i in 1..n {
            let d = self.phase[i] - self.phase[i - 1];
            if d == 0.0 {
                continue;
            }
            let s = d.signum();
            if dir != 0.0 && s != dir {
                pieces.push((start, i - 1));
                start = i - 1;
            }
            dir = s;
        }
        pieces.push((start, n - 1));
        pieces
    }
}

/// Phase interval reachable at `f0` by sweeping the domain's varactor.
pub fn achievable_phase_range(model: &UnitCellModel, domain: &SlopeDomain, f0: f64) -> PhaseRange {
    achievable_phase_range_with(model, domain, f0, DEFAULT_RANGE_POINTS)
}

pub fn achievable_phase_range_with(
    model: &UnitCellModel,
    domain: &SlopeDomain,
    f0: f64,
    points: usize,
) -> PhaseRange {
    PhaseCurve::sample(model, domain, f0, points).range()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolvedBias {
    pub target_phase: f64,
    /// Swept varactor capacitance (F).
    pub capacitance: f64,
    /// Reverse bias producing `capacitance` on the swept varactor (V).
    pub voltage: f64,
    pub achieved_phase: f64,
    pub slope: f64,
    pub loss: f64,
}

/// Finds the swept capacitance that puts the reflection phase at `f0` on
/// `target_phase`. When several capacitances qualify, the lowest wins.
pub fn solve_bias(
    model: &UnitCellModel,
    domain: &SlopeDomain,
    target_phase: f64,
    f0: f64,
) -> Result<SolvedBias> {
    domain.validate()?;
    let curve = PhaseCurve::sample(model, domain, f0, SOLVER_GRID_POINTS);
    solve_on_curve(model, domain, &curve, target_phase, f0)
}

fn solve_on_curve(
    model: &UnitCellModel,
    domain: &SlopeDomain,
    curve: &PhaseCurve,
    target_phase: f64,
    f0: f64,
) -> Result<SolvedBias> {
    let range = curve.range();
    let target = wrap_deg(target_phase);
    let unreachable = || Error::UnreachablePhase {
        target,
        min: range.min,
        max: range.max,
    };

    let mut candidates = Vec::new();
    let mut t = match range.locate(target) {
        Some(t) => t,
        None => return Err(unreachable()),
    };
    while t <= range.max {
        candidates.push(t);
        t += 360.0;
    }

    let phase_of = |c: f64| {
        let (c1, c2) = domain.capacitances(c);
        model.phase_at(c1, c2, f0)
    };

    let mut best: Option<f64> = None;
    for &(a, b) in &curve.monotonic_pieces() {
        let (pa, pb) = (curve.phase[a], curve.phase[b]);
        let (lo, hi) = (pa.min(pb), pa.max(pb));
        for &goal in &candidates {
            if goal < lo || goal > hi {
                continue;
            }
            let c = if a == b {
                curve.capacitance[a]
            } else {
                // Unwrap each probe against the nearest grid sample.
                let caps = &curve.capacitance;
                let phases = &curve.phase;
                let local = |c: f64| {
                    let idx = caps[a..=b].partition_point(|&x| x < c) + a;
                    let idx = idx.min(b);
                    let reference = if idx > a && (c - caps[idx - 1]) < (caps[idx] - c) {
                        phases[idx - 1]
                    } else {
                        phases[idx]
                    };
                    reference + wrap_deg(phase_of(c) - reference)
                };
                match bisect(caps[a], caps[b], 0.0, 200, |c| local(c) - goal) {
                    Some(c) => c,
                    None => continue,
                }
            };
            if best.map_or(true, |b| c < b) {
                best = Some(c);
            }
        }
    }

    let c = best.ok_or_else(unreachable)?;
    let (c1, c2) = domain.capacitances(c);
    let achieved = model.phase_at(c1, c2, f0);
    if wrap_deg(achieved - target).abs() > SOLVER_TOLERANCE_DEG {
        return Err(Error::Numerical(format!(
            "bias solve for {target} deg stalled at {achieved} deg"
        )));
    }
    let voltage = domain.swept_varactor(model).bias_for_capacitance(c)?;
    Ok(SolvedBias {
        target_phase: target,
        capacitance: c,
        voltage,
        achieved_phase: achieved,
        slope: model.phase_slope_at(c1, c2, f0, DEFAULT_SLOPE_STEP)?,
        loss: model.loss_at(c1, c2, f0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasLut {
    pub domain: SlopeDomain,
    pub f0: f64,
    /// Bias of the held varactor (V).
    pub fixed_voltage: f64,
    pub rows: Vec<SolvedBias>,
}

/// One [`solve_bias`] row per requested phase, at the model's `f0`.
pub fn build_lut(model: &UnitCellModel, domain: &SlopeDomain, phases: &[f64]) -> Result<BiasLut> {
    domain.validate()?;
    if phases.is_empty() {
        return Err(Error::InvalidArgument("phase grid is empty".into()));
    }
    if phases.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("phase grid must be strictly increasing".into()));
    }
    let fixed_voltage = domain
        .fixed_varactor(model)
        .bias_for_capacitance(domain.fixed_capacitance)?;
    let f0 = model.f0;
    let curve = PhaseCurve::sample(model, domain, f0, SOLVER_GRID_POINTS);
    let solved = crate::par::map(phases, |&p| solve_on_curve(model, domain, &curve, p, f0));
    let rows = solved.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(BiasLut {
        domain: *domain,
        f0,
        fixed_voltage,
        rows,
    })
}

/// `from, from + step, ..., to` (inclusive when `to` lands on the grid).
pub fn phase_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) || !(from.is_finite() && to.is_finite()) || to < from {
        return Err(Error::InvalidArgument(
            "phase grid needs finite from <= to and step > 0".into(),
        ));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| from + step * i as f64).collect())
}

impl BiasLut {
    pub fn phase_bounds(&self) -> Option<PhaseRange> {
        let min = self.rows.iter().map(|r| r.achieved_phase).fold(f64::INFINITY, f64::min);
        let max = self.rows.iter().map(|r| r.achieved_phase).fold(f64::NEG_INFINITY, f64::max);
        (!self.rows.is_empty()).then_some(PhaseRange { min, max })
    }

    /// `(C_D1, C_D2)` for a row.
    pub fn capacitances(&self, row: &SolvedBias) -> (f64, f64) {
        self.domain.capacitances(row.capacitance)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "phase_target_deg,c_pf,v_bias_v,phase_achieved_deg,slope_deg_per_mhz,loss_db\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt17(r.target_phase),
                fmt17(r.capacitance / PICO),
                fmt17(r.voltage),
                fmt17(r.achieved_phase),
                fmt17(r.slope),
                fmt17(r.loss)
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_file::ModelFile;
    use proptest::prelude::*;

    fn model() -> UnitCellModel {
        ModelFile::shipped().model
    }

    #[test]
    fn domain_names_parse_both_ways() {
        for k in [DomainKind::Dogbone, DomainKind::Patch] {
            assert_eq!(k.to_string().parse::<DomainKind>().unwrap(), k);
        }
        assert_eq!("PATCH".parse::<DomainKind>().unwrap(), DomainKind::Patch);
        assert!("hole".parse::<DomainKind>().is_err());
    }

    #[test]
    fn capacitances_put_swept_value_in_the_right_slot() {
        let (d, p) = (SlopeDomain::dogbone(), SlopeDomain::patch());
        assert_eq!(d.capacitances(2.7e-12), (2.7e-12, d.fixed_capacitance));
        assert_eq!(p.capacitances(0.9e-12), (p.fixed_capacitance, 0.9e-12));
        assert!((p.fixed_capacitance - 1.1e-12).abs() < 1e-24);
    }

    #[test]
    fn reversed_domain_rejected() {
        let d = SlopeDomain {
            swept_min: 3e-12,
            swept_max: 2e-12,
            ..SlopeDomain::dogbone()
        };
        assert!(matches!(solve_bias(&model(), &d, 0.0, 2.5e9), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn degenerate_interval_has_zero_width() {
        let m = model();
        let d = SlopeDomain {
            swept_min: 2.7e-12,
            swept_max: 2.7e-12,
            ..SlopeDomain::dogbone()
        };
        let r = achievable_phase_range(&m, &d, m.f0);
        assert_eq!(r.width(), 0.0);
        let p = m.phase_at(2.7e-12, 5e-12, m.f0);
        let s = solve_bias(&m, &d, p, m.f0).unwrap();
        assert_eq!(s.capacitance, 2.7e-12);
    }

    #[test]
    fn locate_finds_the_in_range_representative() {
        let r = PhaseRange { min: 170.0, max: 270.0 };
        assert_eq!(r.locate(-100.0), Some(260.0));
        assert_eq!(r.locate(180.0), Some(180.0));
        assert_eq!(r.locate(0.0), None);
        let r = PhaseRange { min: -10.0, max: 10.0 };
        assert_eq!(r.locate(5.0), Some(5.0));
        assert_eq!(r.locate(365.0), Some(5.0));
    }

    #[test]
    fn range_scan_refinement_is_stable() {
        let m = model();
        for d in [SlopeDomain::dogbone(), SlopeDomain::patch()] {
            let coarse = achievable_phase_range_with(&m, &d, m.f0, 1000);
            let fine = achievable_phase_range_with(&m, &d, m.f0, 4000);
            assert!((coarse.min - fine.min).abs() <= 0.5, "{coarse:?} {fine:?}");
            assert!((coarse.max - fine.max).abs() <= 0.5, "{coarse:?} {fine:?}");
        }
    }

    #[test]
    fn solving_a_sampled_phase_recovers_its_capacitance() {
        // The phase of the midpoint bias is a fixed point of the solver when
        // the curve is monotonic.
        let m = model();
        let d = SlopeDomain::dogbone();
        let curve = PhaseCurve::sample(&m, &d, m.f0, 2001);
        assert_eq!(curve.monotonic_pieces().len(), 1);
        let c = 0.5 * (d.swept_min + d.swept_max);
        let p = m.phase_at(c, d.fixed_capacitance, m.f0);
        let s = solve_bias(&m, &d, p, m.f0).unwrap();
        assert!((s.capacitance - c).abs() <= 1e-9 * c, "{} vs {c}", s.capacitance);
        assert!(wrap_deg(s.achieved_phase - p).abs() < 1e-6);
        let v = d.swept_varactor(&m).bias_for_capacitance(c).unwrap();
        assert!((s.voltage - v).abs() < 1e-6);
    }

    #[test]
    fn monotone_phase_gives_monotone_capacitance() {
        let m = model();
        let d = SlopeDomain::dogbone();
        let range = achievable_phase_range(&m, &d, m.f0);
        let phases = phase_grid(range.min.ceil(), range.max.floor(), 5.0).unwrap();
        let lut = build_lut(&m, &d, &phases).unwrap();
        let caps: Vec<f64> = lut.rows.iter().map(|r| r.capacitance).collect();
        let increasing = caps.windows(2).all(|w| w[1] > w[0]);
        let decreasing = caps.windows(2).all(|w| w[1] < w[0]);
        assert!(increasing || decreasing);
    }

    #[test]
    fn lut_rows_agree_with_the_forward_model() {
        let m = model();
        let d = SlopeDomain::dogbone();
        let lut = build_lut(&m, &d, &[-90.0, 0.0, 90.0]).unwrap();
        for r in &lut.rows {
            let (c1, c2) = lut.capacitances(r);
            assert_eq!(c2, 5e-12);
            assert!(wrap_deg(m.phase_at(c1, c2, m.f0) - r.target_phase).abs() <= SOLVER_TOLERANCE_DEG);
            let slope = m.phase_slope_at(c1, c2, m.f0, DEFAULT_SLOPE_STEP).unwrap();
            assert_eq!(slope, r.slope);
            assert_eq!(m.loss_at(c1, c2, m.f0), r.loss);
        }
        let v = m.d2.bias_for_capacitance(5e-12).unwrap();
        assert_eq!(lut.fixed_voltage, v);
        let b = lut.phase_bounds().unwrap();
        assert!(b.min < -89.0 && b.max > 89.0);
    }

    #[test]
    fn adjacent_rows_interpolate_linearly() {
        let m = model();
        let d = SlopeDomain::dogbone();
        let range = achievable_phase_range(&m, &d, m.f0);
        let phases = phase_grid(range.min.ceil(), range.max.floor(), 1.0).unwrap();
        let lut = build_lut(&m, &d, &phases).unwrap();
        for w in lut.rows.windows(2) {
            let c = 0.5 * (w[0].capacitance + w[1].capacitance);
            let (c1, c2) = d.capacitances(c);
            let predicted = w[0].achieved_phase + 0.5 * wrap_deg(w[1].achieved_phase - w[0].achieved_phase);
            let err = wrap_deg(m.phase_at(c1, c2, m.f0) - predicted).abs();
            assert!(err <= 0.5, "rows {} / {}: {err}", w[0].target_phase, w[1].target_phase);
        }
    }

    #[test]
    fn single_row_lut() {
        let m = model();
        let lut = build_lut(&m, &SlopeDomain::dogbone(), &[10.0]).unwrap();
        assert_eq!(lut.rows.len(), 1);
        assert_eq!(lut.to_csv().lines().count(), 2);
    }

    #[test]
    fn lut_rejects_bad_grids() {
        let m = model();
        let d = SlopeDomain::dogbone();
        assert!(build_lut(&m, &d, &[]).is_err());
        assert!(build_lut(&m, &d, &[1.0, 1.0]).is_err());
        assert!(build_lut(&m, &d, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn unreachable_phase_is_named() {
        let m = model();
        let d = SlopeDomain::patch();
        let range = achievable_phase_range(&m, &d, m.f0);
        // Pick a phase outside the reachable arc.
        let outside = wrap_deg(range.max + 0.5 * (360.0 - range.width()));
        match solve_bias(&m, &d, outside, m.f0) {
            Err(e @ Error::UnreachablePhase { .. }) => {
                let Error::UnreachablePhase { target, .. } = e else { unreachable!() };
                assert_eq!(target, outside);
            }
            other => panic!("expected an unreachable phase, got {other:?}"),
        }
        let err = build_lut(&m, &d, &[outside]).unwrap_err();
        assert!(matches!(err, Error::UnreachablePhase { .. }));
    }

    #[test]
    fn csv_header_and_columns() {
        let m = model();
        let lut = build_lut(&m, &SlopeDomain::dogbone(), &[-30.0, 30.0]).unwrap();
        let csv = lut.to_csv();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "phase_target_deg,c_pf,v_bias_v,phase_achieved_deg,slope_deg_per_mhz,loss_db"
        );
        let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(first.len(), 6);
        assert_eq!(first[0], -30.0);
        assert!((first[1] * PICO - lut.rows[0].capacitance).abs() < 1e-24);
    }

    #[test]
    fn phase_grid_counts() {
        assert_eq!(phase_grid(-160.0, 160.0, 1.0).unwrap().len(), 321);
        assert_eq!(phase_grid(0.0, 0.0, 1.0).unwrap(), vec![0.0]);
        assert_eq!(phase_grid(0.0, 1.0, 0.3).unwrap().len(), 4);
        assert!(phase_grid(1.0, 0.0, 1.0).is_err());
        assert!(phase_grid(0.0, 1.0, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn every_reachable_phase_is_solved(u in 0.0f64..1.0) {
            let m = model();
            let d = SlopeDomain::dogbone();
            let r = achievable_phase_range(&m, &d, m.f0);
            let target = wrap_deg(r.min + u * r.width());
            let s = solve_bias(&m, &d, target, m.f0).unwrap();
            prop_assert!(wrap_deg(s.achieved_phase - target).abs() <= SOLVER_TOLERANCE_DEG);
            prop_assert!(s.capacitance >= d.swept_min && s.capacitance <= d.swept_max);
        }
    }
}
