//! Array-level steering: per-element phase targets for a reflected beam,
//! bias assignment from a lookup table, and the far-field array factor.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::biasctl::{BiasLut, DomainKind, SlopeDomain};
use crate::circuit::{fmt17, UnitCellModel};
use crate::error::{Error, Result};
use crate::phase::wrap_deg;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Cell size of the unit cell, used as the default element pitch.
pub const DEFAULT_PITCH: f64 = 0.027;
pub const DEFAULT_SCAN_LIMIT_DEG: f64 = 80.0;
pub const DEFAULT_SCAN_STEP_DEG: f64 = 0.25;

const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    pub nx: usize,
    pub ny: usize,
    pub pitch: f64,
}

impl ArrayGeometry {
    pub fn new(nx: usize, ny: usize, pitch: f64) -> Result<Self> {
        let g = Self { nx, ny, pitch };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidArgument("array needs nx, ny >= 1".into()));
        }
        if !(self.pitch > 0.0 && self.pitch.is_finite()) {
            return Err(Error::InvalidArgument("pitch must be finite and > 0".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// In-plane position of element `(m, n)`, grid centered on the origin.
    pub fn position(&self, m: usize, n: usize) -> (f64, f64) {
        (
            (m as f64 - (self.nx as f64 - 1.0) / 2.0) * self.pitch,
            (n as f64 - (self.ny as f64 - 1.0) / 2.0) * self.pitch,
        )
    }

    /// Positions in row-major order (`m` slowest).
    pub fn positions(&self) -> Vec<(f64, f64)> {
        (0..self.nx)
            .flat_map(|m| (0..self.ny).map(move |n| (m, n)))
            .map(|(m, n)| self.position(m, n))
            .collect()
    }
}

/// A unit vector on the reflecting side of the surface (`z >= 0`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Direction {
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !((norm - 1.0).abs() <= UNIT_TOLERANCE) {
            return Err(Error::InvalidArgument(format!(
                "direction ({x}, {y}, {z}) is not a unit vector (norm {norm})"
            )));
        }
        if z < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "direction ({x}, {y}, {z}) points behind the surface"
            )));
        }
        Ok(Self { x, y, z })
    }

    /// From polar angle off the normal and azimuth, both in degrees.
    /// Negative `theta` stands for the same cut on the opposite side.
    pub fn from_angles(theta_deg: f64, phi_deg: f64) -> Result<Self> {
        if !(theta_deg.is_finite() && phi_deg.is_finite()) || theta_deg.abs() > 90.0 {
            return Err(Error::InvalidArgument(format!(
                "direction angles ({theta_deg}, {phi_deg}) out of range"
            )));
        }
        let (t, p) = (theta_deg.to_radians(), phi_deg.to_radians());
        Ok(Self {
            x: t.sin() * p.cos(),
            y: t.sin() * p.sin(),
            z: t.cos(),
        })
    }

    pub fn normal() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            z: 1.0,
        }
    }

    /// Specular image of a direction of arrival.
    pub fn mirror(&self) -> Self {
        Self {
            x: -self.x,
            y: -self.y,
            z: self.z,
        }
    }
}

pub fn wavenumber(f: f64) -> f64 {
    2.0 * std::f64::consts::PI * f / SPEED_OF_LIGHT
}

/// Per-element reflection phase (degrees, row-major) steering a wave
/// arriving from `incident` into `desired`.
pub fn phase_gradient(
    geometry: &ArrayGeometry,
    incident: &Direction,
    desired: &Direction,
    f0: f64,
) -> Result<Vec<f64>> {
    geometry.validate()?;
    // Re-check in case the caller built the struct by hand.
    Direction::new(incident.x, incident.y, incident.z)?;
    Direction::new(desired.x, desired.y, desired.z)?;
    if !(f0 > 0.0 && f0.is_finite()) {
        return Err(Error::Domain(format!("frequency must be > 0, got {f0}")));
    }
    let k0 = wavenumber(f0);
    let (sx, sy) = (desired.x + incident.x, desired.y + incident.y);
    Ok(geometry
        .positions()
        .into_iter()
        .map(|(x, y)| wrap_deg((-k0 * (sx * x + sy * y)).to_degrees()))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElementState {
    pub m: usize,
    pub n: usize,
    pub target_phase: f64,
    /// Index of the assigned LUT row.
    pub lut_row: usize,
    pub c_d1: f64,
    pub c_d2: f64,
    pub v_bias: f64,
    pub achieved_phase: f64,
    /// Achieved minus target, wrapped.
    pub error: f64,
    /// Target fell outside the table and was clamped to its nearest end.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub geometry: ArrayGeometry,
    pub incident: Direction,
    pub desired: Direction,
    pub domain: SlopeDomain,
    pub elements: Vec<ElementState>,
    pub max_error: f64,
    pub mean_error: f64,
    pub clamped: usize,
}

impl ArrayConfig {
    pub fn domain_kind(&self) -> DomainKind {
        self.domain.kind
    }
}

/// Assigns every element the LUT row whose achieved phase is nearest its
/// target. `targets` is row-major over `geometry`.
pub fn configure(
    geometry: &ArrayGeometry,
    incident: &Direction,
    desired: &Direction,
    lut: &BiasLut,
    targets: &[f64],
) -> Result<ArrayConfig> {
    geometry.validate()?;
    if lut.rows.is_empty() {
        return Err(Error::InvalidArgument("lookup table is empty".into()));
    }
    if targets.len() != geometry.len() {
        return Err(Error::InvalidArgument(format!(
            "{} targets for {} elements",
            targets.len(),
            geometry.len()
        )));
    }
    let lo = lut.rows.first().map(|r| r.target_phase).unwrap_or_default();
    let hi = lut.rows.last().map(|r| r.target_phase).unwrap_or_default();

    let elements: Vec<ElementState> = crate::par::map(
        &targets.iter().copied().enumerate().collect::<Vec<_>>(),
        |&(i, target)| {
            let wrapped = wrap_deg(target);
            let (goal, clamped) = if wrapped < lo || wrapped > hi {
                let (dl, dh) = (wrap_deg(wrapped - lo).abs(), wrap_deg(wrapped - hi).abs());
                (if dl <= dh { lo } else { hi }, true)
            } else {
                (wrapped, false)
            };
            let (row_idx, row) = lut
                .rows
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    let da = wrap_deg(a.achieved_phase - goal).abs();
                    let db = wrap_deg(b.achieved_phase - goal).abs();
                    da.total_cmp(&db)
                })
                .expect("non-empty table");
            let (c_d1, c_d2) = lut.capacitances(row);
            ElementState {
                m: i / geometry.ny,
                n: i % geometry.ny,
                target_phase: wrapped,
                lut_row: row_idx,
                c_d1,
                c_d2,
                v_bias: row.voltage,
                achieved_phase: row.achieved_phase,
                error: wrap_deg(row.achieved_phase - wrapped),
                clamped,
            }
        },
    );
    let max_error = elements.iter().map(|e| e.error.abs()).fold(0.0, f64::max);
    let mean_error = elements.iter().map(|e| e.error.abs()).sum::<f64>() / elements.len() as f64;
    let clamped = elements.iter().filter(|e| e.clamped).count();
    Ok(ArrayConfig {
        geometry: *geometry,
        incident: *incident,
        desired: *desired,
        domain: lut.domain,
        elements,
        max_error,
        mean_error,
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatternPoint {
    pub f: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub af: Complex64,
}

impl PatternPoint {
    pub fn magnitude_db(&self) -> f64 {
        20.0 * self.af.norm().log10()
    }
}

/// Cut through the pattern at azimuth `phi_deg` over signed polar angles.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularGrid {
    pub phi_deg: f64,
    pub theta_deg: Vec<f64>,
}

impl AngularGrid {
    pub fn cut(phi_deg: f64, limit_deg: f64, step_deg: f64) -> Result<Self> {
        if !(step_deg > 0.0 && limit_deg >= 0.0 && limit_deg <= 90.0) {
            return Err(Error::InvalidArgument("angular grid needs step > 0 and limit in [0, 90]".into()));
        }
        let n = (2.0 * limit_deg / step_deg + 1e-9).floor() as usize + 1;
        Ok(Self {
            phi_deg,
            theta_deg: (0..n).map(|i| -limit_deg + step_deg * i as f64).collect(),
        })
    }

    pub fn default_cut(phi_deg: f64) -> Self {
        Self::cut(phi_deg, DEFAULT_SCAN_LIMIT_DEG, DEFAULT_SCAN_STEP_DEG).expect("valid defaults")
    }
}

/// Far-field array factor at `f` over `grid`, each element weighted by its
/// own frequency-dependent reflection at its assigned capacitances.
pub fn array_factor(
    config: &ArrayConfig,
    model: &UnitCellModel,
    f: f64,
    grid: &AngularGrid,
) -> Result<Vec<PatternPoint>> {
    if !model.band.contains(f) {
        return Err(Error::FrequencyOutOfRange {
            value: f,
            min: model.band.start,
            max: model.band.stop,
        });
    }
    let k = wavenumber(f);
    let inc = config.incident;
    let weighted: Vec<(f64, f64, Complex64)> = config
        .elements
        .iter()
        .map(|e| {
            let (x, y) = config.geometry.position(e.m, e.n);
            (x, y, model.reflection_at(e.c_d1, e.c_d2, f))
        })
        .collect();
    let points = crate::par::map(&grid.theta_deg, |&theta| {
        let u = Direction::from_angles(theta, grid.phi_deg).expect("grid angles are in range");
        let (sx, sy) = (u.x + inc.x, u.y + inc.y);
        let af = weighted
            .iter()
            .map(|&(x, y, g)| g * Complex64::from_polar(1.0, k * (sx * x + sy * y)))
            .sum();
        PatternPoint {
            f,
            theta_deg: theta,
            phi_deg: grid.phi_deg,
            af,
        }
    });
    Ok(points)
}

/// Polar angle of the pattern maximum on a cut; ties go to the first.
pub fn peak_theta(pattern: &[PatternPoint]) -> Option<f64> {
    let mut best: Option<&PatternPoint> = None;
    for p in pattern {
        if best.map_or(true, |b| p.af.norm() > b.af.norm()) {
            best = Some(p);
        }
    }
    best.map(|p| p.theta_deg)
}

pub fn pattern_csv(points: &[PatternPoint]) -> String {
    let mut out = String::from("f_hz,theta_deg,phi_deg,re,im,mag_db\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt17(p.f),
            fmt17(p.theta_deg),
            fmt17(p.phi_deg),
            fmt17(p.af.re),
            fmt17(p.af.im),
            fmt17(p.magnitude_db())
        );
    }
    out
}
