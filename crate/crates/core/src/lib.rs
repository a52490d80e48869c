//! Monte Carlo model of charge bursts from particle impacts in a
//! superconducting-qubit chip and the correlated qubit errors they cause.

pub mod config;
pub mod error;
pub mod field;
pub mod geometry;
pub mod induced;
pub mod qubit_errors;
pub mod pipeline;
pub mod recovery;
pub mod rng;
pub mod simulate;
pub mod source;
pub mod stats;
pub mod svg;
pub mod transport;
pub mod units;

pub use error::{Error, Result};
