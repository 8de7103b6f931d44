use std::fmt;

use thiserror::Error;

/// Which end of an interval a value fell off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Lower,
    Upper,
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::Lower => f.write_str("lower"),
            Bound::Upper => f.write_str("upper"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("bias {value} V is outside [{min}, {max}] V ({bound} bound violated)")]
    BiasOutOfRange {
        value: f64,
        min: f64,
        max: f64,
        bound: Bound,
    },

    #[error("capacitance {target:e} F is unreachable; achievable interval is [{min:e}, {max:e}] F")]
    UnreachableCapacitance { target: f64, min: f64, max: f64 },

    #[error("phase {target} deg is unreachable; achievable interval is [{min}, {max}] deg")]
    UnreachablePhase { target: f64, min: f64, max: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("frequency {value} Hz is outside [{min}, {max}] Hz")]
    FrequencyOutOfRange { value: f64, min: f64, max: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("under-determined fit: {samples} samples for {parameters} free parameters")]
    UnderDetermined { samples: usize, parameters: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported port count at line {line}: {columns} columns (only one-port data is supported)")]
    UnsupportedPortCount { line: usize, columns: usize },

    #[error("unsupported network parameter `{0}` (only S is supported)")]
    UnsupportedParameter(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name: name.to_string(),
        reason: reason.into(),
    }
}
