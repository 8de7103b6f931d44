//! Equivalent circuit of the stacked dog-bone / patch unit cell.
//!
//! Two series resonators, each loaded by a varactor, sit in parallel with
//! the ground-plane inductance `L0`. The dog-bone varactor D1 is always in
//! series with its resonator; D2 is either in series as well or in parallel
//! with `C2`, selected by [`VaractorTopology`]. The surface impedance is
//! compared against the free-space wave impedance at normal incidence.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::phase::{unwrap_deg, wrap_deg};
use crate::varactor::VaractorModel;

/// Free-space wave impedance (ohm).
pub const ETA0: f64 = 376.730313;

/// Default central-difference step for phase slopes (Hz).
pub const DEFAULT_SLOPE_STEP: f64 = 0.1e6;

/// Default number of points in a band sweep.
pub const DEFAULT_SWEEP_POINTS: usize = 401;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchParams {
    /// Ohm.
    pub r: f64,
    /// Henry.
    pub l: f64,
    /// Farad.
    pub c: f64,
}

impl BranchParams {
    pub fn new(r: f64, l: f64, c: f64) -> Result<Self> {
        let b = Self { r, l, c };
        b.validate("branch")?;
        Ok(b)
    }

    pub(crate) fn validate(&self, which: &str) -> Result<()> {
        if !(self.r.is_finite() && self.l.is_finite() && self.c.is_finite()) {
            return Err(invalid(which, "r, l and c must be finite"));
        }
        if self.r < 0.0 {
            return Err(invalid(&format!("{which}.r"), "must be >= 0"));
        }
        if self.l <= 0.0 {
            return Err(invalid(&format!("{which}.l"), "must be > 0"));
        }
        if self.c <= 0.0 {
            return Err(invalid(&format!("{which}.c"), "must be > 0"));
        }
        Ok(())
    }
}

/// How a varactor loads its resonator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VaractorTopology {
    /// `R + jwL + 1/(jwC) + Rs + 1/(jwC_D)`.
    #[default]
    Series,
    /// `R + jwL + Rs + 1/(jw(C + C_D))`.
    ParallelC2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub start: f64,
    pub stop: f64,
}

impl Band {
    pub fn contains(&self, f: f64) -> bool {
        f >= self.start && f <= self.stop
    }

    pub fn width(&self) -> f64 {
        self.stop - self.start
    }
}

impl Default for Band {
    fn default() -> Self {
        Self {
            start: 2.4e9,
            stop: 2.6e9,
        }
    }
}

/// State of one varactor: either a reverse bias or an equivalent capacitance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Drive {
    Voltage(f64),
    Capacitance(f64),
}

impl Drive {
    pub fn resolve(&self, varactor: &VaractorModel) -> Result<f64> {
        match *self {
            Drive::Voltage(v) => varactor.capacitance(v),
            Drive::Capacitance(c) => {
                if c.is_finite() && c > 0.0 {
                    Ok(c)
                } else {
                    Err(invalid("capacitance", "must be finite and > 0"))
                }
            }
        }
    }
}

/// Drive states of D1 (dog-bone) and D2 (patch).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasPoint {
    pub d1: Drive,
    pub d2: Drive,
}

impl BiasPoint {
    pub fn volts(v1: f64, v2: f64) -> Self {
        Self {
            d1: Drive::Voltage(v1),
            d2: Drive::Voltage(v2),
        }
    }

    pub fn capacitances(c1: f64, c2: f64) -> Self {
        Self {
            d1: Drive::Capacitance(c1),
            d2: Drive::Capacitance(c2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitCellModel {
    /// Dog-bone resonator.
    pub branch1: BranchParams,
    /// Patch resonator.
    pub branch2: BranchParams,
    /// Ground-plane inductance (H).
    pub l0: f64,
    pub d1: VaractorModel,
    pub d2: VaractorModel,
    #[serde(default)]
    pub d2_topology: VaractorTopology,
    /// Operating frequency (Hz).
    pub f0: f64,
    pub band: Band,
}

impl UnitCellModel {
    pub fn validate(&self) -> Result<()> {
        self.branch1.validate("branch1")?;
        self.branch2.validate("branch2")?;
        if !(self.l0.is_finite() && self.l0 > 0.0) {
            return Err(invalid("l0", "must be finite and > 0"));
        }
        self.d1.validate()?;
        self.d2.validate()?;
        if !(self.band.start.is_finite() && self.band.stop.is_finite()) {
            return Err(invalid("band", "must be finite"));
        }
        if self.band.start <= 0.0 || self.band.width() <= 0.0 {
            return Err(invalid("band", "must satisfy 0 < start < stop"));
        }
        if !self.band.contains(self.f0) {
            return Err(invalid("f0", "must lie within band"));
        }
        Ok(())
    }

    /// Equivalent capacitances `(C_D1, C_D2)` for a bias point.
    pub fn resolve(&self, bias: &BiasPoint) -> Result<(f64, f64)> {
        Ok((bias.d1.resolve(&self.d1)?, bias.d2.resolve(&self.d2)?))
    }

    pub fn surface_impedance(&self, bias: &BiasPoint, f: f64) -> Result<Complex64> {
        check_frequency(f)?;
        let (c1, c2) = self.resolve(bias)?;
        Ok(self.surface_impedance_at(c1, c2, f))
    }

    pub fn reflection(&self, bias: &BiasPoint, f: f64) -> Result<Complex64> {
        Ok(reflection_from_impedance(self.surface_impedance(bias, f)?, ETA0))
    }

    /// Surface impedance with the varactors replaced by capacitances.
    /// Assumes `f > 0`.
    pub fn surface_impedance_at(&self, cd1: f64, cd2: f64, f: f64) -> Complex64 {
        let w = 2.0 * PI * f;
        let z1 = branch_z(&self.branch1, self.d1.r_s, cd1, VaractorTopology::Series, w);
        let z2 = branch_z(&self.branch2, self.d2.r_s, cd2, self.d2_topology, w);
        parallel(z1, z2, Complex64::new(0.0, w * self.l0))
    }

    /// Reflection coefficient with the varactors replaced by capacitances.
    /// Assumes `f > 0`.
    pub fn reflection_at(&self, cd1: f64, cd2: f64, f: f64) -> Complex64 {
        reflection_from_impedance(self.surface_impedance_at(cd1, cd2, f), ETA0)
    }

    pub fn phase_at(&self, cd1: f64, cd2: f64, f: f64) -> f64 {
        self.reflection_at(cd1, cd2, f).arg().to_degrees()
    }

    pub fn loss_at(&self, cd1: f64, cd2: f64, f: f64) -> f64 {
        -20.0 * self.reflection_at(cd1, cd2, f).norm().log10()
    }

    pub fn sweep(&self, bias: &BiasPoint, grid: &[f64]) -> Result<FrequencyResponse> {
        check_grid(grid)?;
        let (c1, c2) = self.resolve(bias)?;
        let samples = crate::par::map(grid, |&f| Sample {
            freq: f,
            gamma: self.reflection_at(c1, c2, f),
        });
        FrequencyResponse::new(samples)
    }

    /// Phase-frequency slope in degrees per MHz by a central difference on
    /// locally unwrapped phase.
    pub fn phase_slope(&self, bias: &BiasPoint, f: f64, h: f64) -> Result<f64> {
        let (c1, c2) = self.resolve(bias)?;
        self.phase_slope_at(c1, c2, f, h)
    }

    pub fn phase_slope_at(&self, cd1: f64, cd2: f64, f: f64, h: f64) -> Result<f64> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Domain(format!("slope step must be > 0, got {h}")));
        }
        if !(f - h > 0.0) {
            return Err(Error::Domain(format!("f - h must be > 0 (f = {f}, h = {h})")));
        }
        let lo = self.phase_at(cd1, cd2, f - h);
        let mid = self.phase_at(cd1, cd2, f);
        let hi = self.phase_at(cd1, cd2, f + h);
        let d_lo = wrap_deg(mid - lo);
        let d_hi = wrap_deg(hi - mid);
        if d_lo.abs() > 90.0 || d_hi.abs() > 90.0 || !(d_lo + d_hi).is_finite() {
            return Err(Error::Numerical(format!(
                "phase changes by more than 90 deg across a {h} Hz half-step near {f} Hz"
            )));
        }
        Ok((d_lo + d_hi) / (2.0 * h) * 1e6)
    }

    /// Uniform grid over the model band.
    pub fn band_grid(&self, points: usize) -> Vec<f64> {
        linspace(self.band.start, self.band.stop, points)
    }
}

/// Impedance of one loaded resonator.
pub fn branch_impedance(
    branch: &BranchParams,
    varactor: &VaractorModel,
    drive: Drive,
    topology: VaractorTopology,
    f: f64,
) -> Result<Complex64> {
    check_frequency(f)?;
    let cd = drive.resolve(varactor)?;
    Ok(branch_z(branch, varactor.r_s, cd, topology, 2.0 * PI * f))
}

fn branch_z(b: &BranchParams, r_s: f64, cd: f64, topology: VaractorTopology, w: f64) -> Complex64 {
    let x = match topology {
        VaractorTopology::Series => w * b.l - 1.0 / (w * b.c) - 1.0 / (w * cd),
        VaractorTopology::ParallelC2 => w * b.l - 1.0 / (w * (b.c + cd)),
    };
    Complex64::new(b.r + r_s, x)
}

/// `(1/z1 + 1/z2 + 1/z0)^-1`, with an exact zero whenever any arm is a short.
fn parallel(z1: Complex64, z2: Complex64, z0: Complex64) -> Complex64 {
    let zero = Complex64::new(0.0, 0.0);
    if z1 == zero || z2 == zero || z0 == zero {
        return zero;
    }
    (z1.inv() + z2.inv() + z0.inv()).inv()
}

/// `(z - z_ref) / (z + z_ref)`.
pub fn reflection_from_impedance(z: Complex64, z_ref: f64) -> Complex64 {
    (z - z_ref) / (z + z_ref)
}

fn check_frequency(f: f64) -> Result<()> {
    if f > 0.0 && f.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("frequency must be > 0, got {f}")))
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "frequency grid needs at least 2 points, got {}",
            grid.len()
        )));
    }
    if grid.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
        return Err(Error::InvalidArgument("frequency grid values must be > 0".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "frequency grid must be strictly increasing".into(),
        ));
    }
    Ok(())
}

pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { stop } else { start + step * i as f64 })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub freq: f64,
    pub gamma: Complex64,
}

/// Reflection coefficient sampled on a strictly increasing frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponse {
    samples: Vec<Sample>,
}

impl FrequencyResponse {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        if samples.windows(2).any(|w| w[1].freq <= w[0].freq) {
            return Err(Error::InvalidArgument(
                "response frequencies must be strictly increasing".into(),
            ));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn freqs(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.freq).collect()
    }

    pub fn magnitude_db(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| 20.0 * s.gamma.norm().log10())
            .collect()
    }

    pub fn wrapped_phase_deg(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| wrap_deg(s.gamma.arg().to_degrees()))
            .collect()
    }

    pub fn unwrapped_phase_deg(&self) -> Vec<f64> {
        unwrap_deg(&self.wrapped_phase_deg())
    }

    /// Reflection loss in dB at `f`, linearly interpolating `|Γ|`.
    pub fn reflection_loss(&self, f: f64) -> Result<f64> {
        let (first, last) = match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => (a.freq, b.freq),
            _ => return Err(Error::InvalidArgument("empty response".into())),
        };
        if !(f >= first && f <= last) {
            return Err(Error::FrequencyOutOfRange {
                value: f,
                min: first,
                max: last,
            });
        }
        let idx = self.samples.partition_point(|s| s.freq < f);
        let mag = if idx < self.samples.len() && self.samples[idx].freq == f {
            self.samples[idx].gamma.norm()
        } else {
            let a = &self.samples[idx - 1];
            let b = &self.samples[idx];
            let t = (f - a.freq) / (b.freq - a.freq);
            a.gamma.norm() * (1.0 - t) + b.gamma.norm() * t
        };
        Ok(-20.0 * mag.log10())
    }

    /// Column view for JSON export.
    pub fn table(&self) -> ResponseTable {
        let wrapped = self.wrapped_phase_deg();
        ResponseTable {
            freq_hz: self.freqs(),
            re: self.samples.iter().map(|s| s.gamma.re).collect(),
            im: self.samples.iter().map(|s| s.gamma.im).collect(),
            mag_db: self.magnitude_db(),
            phase_unwrapped_deg: unwrap_deg(&wrapped),
            phase_deg: wrapped,
        }
    }

    /// CSV with `freq_hz,re,im,mag_db,phase_deg,phase_unwrapped_deg`.
    pub fn to_csv(&self) -> String {
        let mag = self.magnitude_db();
        let wrapped = self.wrapped_phase_deg();
        let unwrapped = unwrap_deg(&wrapped);
        let mut out = String::from("freq_hz,re,im,mag_db,phase_deg,phase_unwrapped_deg\n");
        for (i, s) in self.samples.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt17(s.freq),
                fmt17(s.gamma.re),
                fmt17(s.gamma.im),
                fmt17(mag[i]),
                fmt17(wrapped[i]),
                fmt17(unwrapped[i])
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseTable {
    pub freq_hz: Vec<f64>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub mag_db: Vec<f64>,
    pub phase_deg: Vec<f64>,
    pub phase_unwrapped_deg: Vec<f64>,
}

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Physical dimensions of the simulated cell. Carried as metadata only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitCellGeometry {
    pub cell_length: f64,
    pub cell_width: f64,
    pub dogbone_l1: f64,
    pub dogbone_w1: f64,
    pub dogbone_g1: f64,
    pub patch_l2: f64,
    pub patch_w2: f64,
    pub substrate: String,
    pub substrate_thickness: f64,
}

impl Default for UnitCellGeometry {
    fn default() -> Self {
        Self {
            cell_length: 27e-3,
            cell_width: 27e-3,
            dogbone_l1: 10e-3,
            dogbone_w1: 0.5e-3,
            dogbone_g1: 7e-3,
            patch_l2: 26e-3,
            patch_w2: 20e-3,
            substrate: "Rogers 5880".into(),
            substrate_thickness: 1.57e-3,
        }
    }
}

impl UnitCellGeometry {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("cell_length", self.cell_length),
            ("cell_width", self.cell_width),
            ("dogbone_l1", self.dogbone_l1),
            ("dogbone_w1", self.dogbone_w1),
            ("dogbone_g1", self.dogbone_g1),
            ("patch_l2", self.patch_l2),
            ("patch_w2", self.patch_w2),
            ("substrate_thickness", self.substrate_thickness),
        ];
        for (name, v) in dims {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, "must be finite and > 0"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const PF: f64 = 1e-12;

    fn varactor(r_s: f64) -> VaractorModel {
        VaractorModel::new(5.3 * PF, 2.0, 1.1, 0.05 * PF, r_s, 0.0, 20.0).unwrap()
    }

    fn model(r: f64) -> UnitCellModel {
        UnitCellModel {
            branch1: BranchParams::new(r, 3e-9, 2e-12).unwrap(),
            branch2: BranchParams::new(r, 8e-9, 0.6e-12).unwrap(),
            l0: 1.2e-9,
            d1: varactor(r),
            d2: varactor(r),
            d2_topology: VaractorTopology::Series,
            f0: 2.5e9,
            band: Band::default(),
        }
    }

    #[test]
    fn series_resonance_is_real_zero() {
        let f = 2.5e9;
        let w = 2.0 * PI * f;
        let (c, cd) = (2e-12, 3e-12);
        let series = c * cd / (c + cd);
        let l = 1.0 / (w * w * series);
        let b = BranchParams::new(0.0, l, c).unwrap();
        let z = branch_impedance(&b, &varactor(0.0), Drive::Capacitance(cd), VaractorTopology::Series, f)
            .unwrap();
        assert_eq!(z.re, 0.0);
        assert!(z.im.abs() < 1e-9 * w * l, "{z}");
    }

    #[test]
    fn parallel_topology_adds_capacitance() {
        let f = 1e9;
        let w = 2.0 * PI * f;
        let b = BranchParams::new(1.0, 1e-9, 2e-12).unwrap();
        let z = branch_impedance(&b, &varactor(0.5), Drive::Capacitance(2e-12), VaractorTopology::ParallelC2, f)
            .unwrap();
        assert!((z.re - 1.5).abs() < 1e-12);
        let expected = w * 1e-9 - 1.0 / (w * 4e-12);
        assert!((z.im - expected).abs() < 1e-9 * expected.abs());
    }

    #[test]
    fn non_positive_frequency_rejected() {
        let b = BranchParams::new(1.0, 1e-9, 2e-12).unwrap();
        for f in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                branch_impedance(&b, &varactor(0.0), Drive::Voltage(1.0), VaractorTopology::Series, f),
                Err(Error::Domain(_))
            ));
        }
        assert!(model(1.0).reflection(&BiasPoint::volts(1.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn short_arm_gives_zero_impedance() {
        let z = parallel(Complex64::new(0.0, 0.0), Complex64::new(3.0, 4.0), Complex64::new(0.0, 7.0));
        assert_eq!(z, Complex64::new(0.0, 0.0));
        let g = reflection_from_impedance(z, ETA0);
        assert_eq!(g, Complex64::new(-1.0, 0.0));
        assert_eq!(g.arg().to_degrees(), 180.0);
    }

    #[test]
    fn resonant_lossless_branch_dominates() {
        let mut m = model(0.0);
        let f = 2.5e9;
        let w = 2.0 * PI * f;
        let cd1 = 3e-12;
        let series = m.branch1.c * cd1 / (m.branch1.c + cd1);
        m.branch1.l = 1.0 / (w * w * series);
        for cd2 in [0.5 * PF, 1.0 * PF, 5.0 * PF] {
            let z = m.surface_impedance_at(cd1, cd2, f);
            assert!(z.norm() < 1e-9, "{z}");
        }
    }

    #[test]
    fn detuned_branches_leave_ground_inductance() {
        let mut m = model(0.0);
        // Tiny capacitances push both branch reactances to ~10^3 x wL0 and beyond.
        m.branch1.c = 1e-18;
        m.branch2.c = 1e-18;
        let f = 2.5e9;
        let z = m.surface_impedance_at(1e-18, 1e-18, f);
        let zl0 = 2.0 * PI * f * m.l0;
        assert!((z.im - zl0).abs() <= 0.01 * zl0 && z.re.abs() <= 0.01 * zl0, "{z}");
    }

    #[test]
    fn parallel_combination_matches_admittance_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let mut m = model(0.0);
            m.branch1 = BranchParams::new(rng.gen_range(0.0..10.0), rng.gen_range(1e-10..1e-8), rng.gen_range(1e-13..1e-11)).unwrap();
            m.branch2 = BranchParams::new(rng.gen_range(0.0..10.0), rng.gen_range(1e-10..1e-8), rng.gen_range(1e-13..1e-11)).unwrap();
            m.l0 = rng.gen_range(1e-10..1e-8);
            m.d1.r_s = rng.gen_range(0.0..3.0);
            m.d2.r_s = rng.gen_range(0.0..3.0);
            if rng.gen_bool(0.5) {
                m.d2_topology = VaractorTopology::ParallelC2;
            }
            let (cd1, cd2) = (rng.gen_range(0.3e-12..6e-12), rng.gen_range(0.3e-12..6e-12));
            let f = rng.gen_range(1e9..4e9);
            let w = 2.0 * PI * f;
            // Independent oracle: admittances from explicit reactance terms.
            let j = Complex64::new(0.0, 1.0);
            let y1 = 1.0
                / (m.branch1.r + m.d1.r_s + j * w * m.branch1.l + 1.0 / (j * w * m.branch1.c) + 1.0 / (j * w * cd1));
            let z2 = match m.d2_topology {
                VaractorTopology::Series => {
                    m.branch2.r + m.d2.r_s + j * w * m.branch2.l + 1.0 / (j * w * m.branch2.c) + 1.0 / (j * w * cd2)
                }
                VaractorTopology::ParallelC2 => {
                    m.branch2.r + m.d2.r_s + j * w * m.branch2.l + 1.0 / (j * w * (m.branch2.c + cd2))
                }
            };
            let y0 = 1.0 / (j * w * m.l0);
            let expected = 1.0 / (y1 + 1.0 / z2 + y0);
            let got = m.surface_impedance_at(cd1, cd2, f);
            assert!((got - expected).norm() <= 1e-12 * expected.norm(), "{got} vs {expected}");
        }
    }

    #[test]
    fn imaginary_impedance_reflects_fully() {
        for x in [-1e4, -37.0, 0.1, 250.0, 1e6] {
            let g = reflection_from_impedance(Complex64::new(0.0, x), ETA0);
            assert!((g.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn validation() {
        assert!(BranchParams::new(-1.0, 1e-9, 1e-12).is_err());
        assert!(BranchParams::new(0.0, 0.0, 1e-12).is_err());
        let mut m = model(1.0);
        m.f0 = 3e9;
        assert!(m.validate().is_err());
        let mut m = model(1.0);
        m.l0 = 0.0;
        assert!(m.validate().is_err());
        assert!(model(1.0).validate().is_ok());
        assert!(UnitCellGeometry::default().validate().is_ok());
    }

    #[test]
    fn sweep_grid_checks() {
        let m = model(1.0);
        let b = BiasPoint::capacitances(2.8 * PF, 5.0 * PF);
        assert_eq!(m.sweep(&b, &[2.4e9, 2.6e9]).unwrap().len(), 2);
        assert!(m.sweep(&b, &[2.4e9]).is_err());
        assert!(m.sweep(&b, &[]).is_err());
        assert!(m.sweep(&b, &[2.6e9, 2.4e9]).is_err());
        assert!(m.sweep(&b, &[0.0, 2.4e9]).is_err());
    }

    #[test]
    fn resistive_surface_has_zero_slope() {
        // With every reactive element negligible the cell is a pure resistor.
        let mut m = model(0.0);
        m.branch1 = BranchParams::new(50.0, 1e-30, 1e30).unwrap();
        m.branch2 = BranchParams::new(50.0, 1e-30, 1e30).unwrap();
        m.l0 = 1e30;
        let s = m.phase_slope_at(1e30, 1e30, 2.5e9, DEFAULT_SLOPE_STEP).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn slope_step_checks() {
        let m = model(1.0);
        assert!(m.phase_slope_at(PF, PF, 2.5e9, 0.0).is_err());
        assert!(m.phase_slope_at(PF, PF, 1e5, 2e5).is_err());
        assert!(matches!(
            m.phase_slope_at(2.8 * PF, 5.0 * PF, 2.5e9, 1e9),
            Err(Error::Numerical(_)) | Ok(_)
        ));
    }

    #[test]
    fn slope_agrees_with_line_fit_and_refinement() {
        let m = model(0.5);
        for (c1, c2) in [(2.8 * PF, 5.0 * PF), (1.1 * PF, 1.0 * PF)] {
            let h = DEFAULT_SLOPE_STEP;
            let f = m.f0;
            let s = m.phase_slope_at(c1, c2, f, h).unwrap();
            let half = m.phase_slope_at(c1, c2, f, h / 2.0).unwrap();
            assert!((s - half).abs() <= 1e-3 * s.abs(), "{s} vs {half}");

            let xs: Vec<f64> = (-5..=5).map(|k| f + k as f64 * h).collect();
            let ys = unwrap_deg(&xs.iter().map(|&x| m.phase_at(c1, c2, x)).collect::<Vec<_>>());
            let mx = xs.iter().sum::<f64>() / 11.0;
            let my = ys.iter().sum::<f64>() / 11.0;
            let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
            let fit = num / den * 1e6;
            assert!((s - fit).abs() <= 0.05 * fit.abs(), "{s} vs {fit}");
        }
    }

    #[test]
    fn views_reconstruct_samples() {
        let m = model(0.7);
        let r = m.sweep(&BiasPoint::capacitances(2.8 * PF, 5.0 * PF), &m.band_grid(DEFAULT_SWEEP_POINTS)).unwrap();
        let mag = r.magnitude_db();
        let ph = r.wrapped_phase_deg();
        let un = r.unwrapped_phase_deg();
        for (i, s) in r.samples().iter().enumerate() {
            let back = Complex64::from_polar(10f64.powf(mag[i] / 20.0), ph[i].to_radians());
            assert!((back - s.gamma).norm() <= 1e-12 * s.gamma.norm());
            let turns = (un[i] - ph[i]) / 360.0;
            assert!((turns - turns.round()).abs() < 1e-9);
            assert!(ph[i] > -180.0 && ph[i] <= 180.0);
        }
    }

    #[test]
    fn loss_interpolation() {
        let samples = vec![
            Sample { freq: 1.0, gamma: Complex64::new(1.0, 0.0) },
            Sample { freq: 3.0, gamma: Complex64::new(0.0, 0.5) },
        ];
        let r = FrequencyResponse::new(samples).unwrap();
        assert_eq!(r.reflection_loss(1.0).unwrap(), 0.0);
        let mid = r.reflection_loss(2.0).unwrap();
        assert!((mid + 20.0 * 0.75f64.log10()).abs() < 1e-12);
        assert!(matches!(r.reflection_loss(3.5), Err(Error::FrequencyOutOfRange { .. })));
        assert!(FrequencyResponse::new(vec![
            Sample { freq: 2.0, gamma: Complex64::new(0.0, 0.0) },
            Sample { freq: 1.0, gamma: Complex64::new(0.0, 0.0) },
        ])
        .is_err());
    }

    #[test]
    fn csv_export() {
        let m = model(1.0);
        let r = m.sweep(&BiasPoint::capacitances(2.8 * PF, 5.0 * PF), &[2.4e9, 2.5e9, 2.6e9]).unwrap();
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "freq_hz,re,im,mag_db,phase_deg,phase_unwrapped_deg");
        assert_eq!(lines.len(), 4);
        let cols: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(cols[0], 2.4e9);
        assert_eq!(cols[1], r.samples()[0].gamma.re);
        assert_eq!(cols[2], r.samples()[0].gamma.im);
    }

    fn any_model() -> impl Strategy<Value = (UnitCellModel, f64, f64, f64)> {
        let branch = (0.0f64..100.0, -24.0f64..-14.0, -32.0f64..-20.0)
            .prop_map(|(r, l, c)| BranchParams::new(r, l.exp(), c.exp()).unwrap());
        let var = (0.5f64..20.0, 0.3f64..3.0, 0.3f64..3.0, 0.0f64..0.5, 0.0f64..20.0)
            .prop_map(|(c, vj, m, cp, rs)| VaractorModel::new(c * PF, vj, m, cp * PF, rs, 0.0, 25.0).unwrap());
        (branch.clone(), branch, -24.0f64..-14.0, var.clone(), var, any::<bool>(), 0.2f64..10.0, 0.0f64..1.0, 0.0f64..25.0, 0.0f64..25.0)
            .prop_map(|(b1, b2, l0, d1, d2, par, f0, t, v1, v2)| {
                let f0 = f0 * 1e9;
                let m = UnitCellModel {
                    branch1: b1,
                    branch2: b2,
                    l0: l0.exp(),
                    d1,
                    d2,
                    d2_topology: if par { VaractorTopology::ParallelC2 } else { VaractorTopology::Series },
                    f0,
                    band: Band { start: 0.9 * f0, stop: 1.1 * f0 },
                };
                let f = m.band.start + t * m.band.width();
                (m, f, v1, v2)
            })
    }

    proptest! {
        #[test]
        fn passive((m, f, v1, v2) in any_model()) {
            let g = m.reflection(&BiasPoint::volts(v1, v2), f).unwrap();
            prop_assert!(g.norm() <= 1.0 + 1e-12, "{}", g.norm());
        }

        #[test]
        fn lossless_is_unitary((mut m, f, v1, v2) in any_model()) {
            m.branch1.r = 0.0;
            m.branch2.r = 0.0;
            m.d1.r_s = 0.0;
            m.d2.r_s = 0.0;
            let g = m.reflection(&BiasPoint::volts(v1, v2), f).unwrap();
            prop_assert!((g.norm() - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn unwrapped_rewraps((m, _f, v1, v2) in any_model()) {
            let r = m.sweep(&BiasPoint::volts(v1, v2), &m.band_grid(64)).unwrap();
            let w = r.wrapped_phase_deg();
            for (u, w) in r.unwrapped_phase_deg().iter().zip(&w) {
                prop_assert!((wrap_deg(*u) - w).abs() < 1e-9);
            }
        }
    }
}
