//! Reverse-biased varactor model.
//!
//! The junction follows the usual SPICE hyperabrupt law
//! `C(V) = Cj0 / (1 + V/Vj)^M + Cp`, with a series loss `Rs` that the circuit
//! layer adds to the loaded branch.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Bound, Error, Result};
use crate::roots::bisect;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaractorModel {
    /// Zero-bias junction capacitance (F).
    pub c_j0: f64,
    /// Junction potential (V).
    pub v_j: f64,
    /// Grading exponent.
    pub m: f64,
    /// Package parasitic capacitance (F).
    pub c_p: f64,
    /// Series resistance (ohm).
    pub r_s: f64,
    /// Usable reverse-bias range (V).
    pub v_min: f64,
    pub v_max: f64,
}

impl VaractorModel {
    pub fn new(
        c_j0: f64,
        v_j: f64,
        m: f64,
        c_p: f64,
        r_s: f64,
        v_min: f64,
        v_max: f64,
    ) -> Result<Self> {
        let model = Self {
            c_j0,
            v_j,
            m,
            c_p,
            r_s,
            v_min,
            v_max,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("c_j0", self.c_j0),
            ("v_j", self.v_j),
            ("m", self.m),
            ("c_p", self.c_p),
            ("r_s", self.r_s),
            ("v_min", self.v_min),
            ("v_max", self.v_max),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        if self.c_j0 <= 0.0 {
            return Err(invalid("c_j0", "must be > 0"));
        }
        if self.v_j <= 0.0 {
            return Err(invalid("v_j", "must be > 0"));
        }
        if self.m <= 0.0 {
            return Err(invalid("m", "must be > 0"));
        }
        if self.c_p < 0.0 {
            return Err(invalid("c_p", "must be >= 0"));
        }
        if self.r_s < 0.0 {
            return Err(invalid("r_s", "must be >= 0"));
        }
        if self.v_min < 0.0 {
            return Err(invalid("v_min", "reverse bias must be >= 0"));
        }
        if self.v_min >= self.v_max {
            return Err(invalid("v_min", "must be < v_max"));
        }
        Ok(())
    }

    /// Junction plus parasitic capacitance at reverse bias `v`.
    pub fn capacitance(&self, v: f64) -> Result<f64> {
        if !(v >= self.v_min) {
            return Err(Error::BiasOutOfRange {
                value: v,
                min: self.v_min,
                max: self.v_max,
                bound: Bound::Lower,
            });
        }
        if v > self.v_max {
            return Err(Error::BiasOutOfRange {
                value: v,
                min: self.v_min,
                max: self.v_max,
                bound: Bound::Upper,
            });
        }
        Ok(self.law(v))
    }

    fn law(&self, v: f64) -> f64 {
        self.c_j0 / (1.0 + v / self.v_j).powf(self.m) + self.c_p
    }

    /// `[C(v_max), C(v_min)]`.
    pub fn capacitance_range(&self) -> (f64, f64) {
        (self.law(self.v_max), self.law(self.v_min))
    }

    /// Reverse bias that produces `c_target`, found by bisection on the
    /// monotonic C-V law.
    pub fn bias_for_capacitance(&self, c_target: f64) -> Result<f64> {
        let (c_lo, c_hi) = self.capacitance_range();
        if !(c_target >= c_lo && c_target <= c_hi) {
            return Err(Error::UnreachableCapacitance {
                target: c_target,
                min: c_lo,
                max: c_hi,
            });
        }
        if c_target == c_hi {
            return Ok(self.v_min);
        }
        if c_target == c_lo {
            return Ok(self.v_max);
        }
        let span = self.v_max - self.v_min;
        bisect(self.v_min, self.v_max, span * 1e-15, 400, |v| {
            self.law(v) - c_target
        })
        .ok_or_else(|| Error::Numerical("C-V inverse failed to bracket".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diode() -> VaractorModel {
        VaractorModel::new(5.3e-12, 2.0, 1.1, 0.05e-12, 1.5, 0.0, 20.0).unwrap()
    }

    #[test]
    fn zero_bias_collapses() {
        let d = diode();
        assert_eq!(d.capacitance(0.0).unwrap(), d.c_j0 + d.c_p);
    }

    #[test]
    fn half_at_junction_potential() {
        let d = VaractorModel::new(2e-12, 0.7, 1.0, 0.0, 0.0, 0.0, 10.0).unwrap();
        let c = d.capacitance(0.7).unwrap();
        assert!((c - 1e-12).abs() < 1e-27);
    }

    #[test]
    fn out_of_range_names_bound() {
        let d = diode();
        match d.capacitance(-0.1) {
            Err(Error::BiasOutOfRange { bound, .. }) => assert_eq!(bound, Bound::Lower),
            other => panic!("unexpected {other:?}"),
        }
        match d.capacitance(20.5) {
            Err(Error::BiasOutOfRange { bound, .. }) => assert_eq!(bound, Bound::Upper),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(VaractorModel::new(0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0).is_err());
        assert!(VaractorModel::new(1e-12, -1.0, 1.0, 0.0, 0.0, 0.0, 1.0).is_err());
        assert!(VaractorModel::new(1e-12, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0).is_err());
        assert!(VaractorModel::new(1e-12, 1.0, 1.0, 0.0, 0.0, 2.0, 1.0).is_err());
        assert!(VaractorModel::new(f64::NAN, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn inverse_fixed_points() {
        let d = diode();
        assert_eq!(d.bias_for_capacitance(d.capacitance(0.0).unwrap()).unwrap(), 0.0);

        let lin = VaractorModel::new(3e-12, 1.2, 1.0, 0.1e-12, 0.0, 0.0, 10.0).unwrap();
        let v = lin.bias_for_capacitance(1.5e-12 + 0.1e-12).unwrap();
        assert!((v - 1.2).abs() < 1e-9);
    }

    #[test]
    fn inverse_round_trip_grid() {
        let d = diode();
        for i in 0..100 {
            let v = d.v_min + (d.v_max - d.v_min) * i as f64 / 99.0;
            let c = d.capacitance(v).unwrap();
            let back = d.bias_for_capacitance(c).unwrap();
            assert!((back - v).abs() <= 1e-6, "v={v} back={back}");
            let c_back = d.capacitance(back).unwrap();
            assert!((c_back - c).abs() / c <= 1e-9);
        }
    }

    #[test]
    fn unreachable_reports_interval() {
        let d = diode();
        let (lo, hi) = d.capacitance_range();
        match d.bias_for_capacitance(hi * 2.0) {
            Err(Error::UnreachableCapacitance { min, max, .. }) => {
                assert_eq!((min, max), (lo, hi));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
