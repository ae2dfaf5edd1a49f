//! Bayesian calibration bounds for simulator discrepancy.

pub mod bounds;
pub mod error;
pub mod io;
pub mod mode;
mod newton;
pub mod normal;
pub mod options;
pub mod posterior;
pub mod sampler;
pub mod simplex;
pub mod sim;

pub use error::{Error, Result};
