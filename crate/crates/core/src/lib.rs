//! Equivalent-circuit simulator and bias design toolkit for a two-slope,
//! varactor-tuned reconfigurable intelligent surface (RIS) unit cell.

pub mod array;
pub mod biasctl;
pub mod calibration;
pub mod circuit;
pub mod error;
pub mod lm;
pub mod model_file;
pub mod phase;
pub mod roots;
pub mod simplex;
pub mod touchstone;
pub mod varactor;

mod par;

pub use error::{Error, Result};
