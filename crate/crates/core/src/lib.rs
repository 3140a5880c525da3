//! Persistence of reaction fronts between diffusing species on an interval
//! and on tree networks.

pub mod analytic;
pub mod error;
pub mod inversion;
pub mod model;
pub mod network;
pub mod quad;
pub mod simulator;

pub use error::{Error, Result};
