//! Learning-rate schedules driven by the suboptimality gap `f(x) - f*`,
//! linear-minimization-oracle optimizers (normalized SGD, signSGD, Lion, Muon),
//! synthetic test problems and smoothness diagnostics.

pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod optim;
pub mod param;
pub mod problems;
pub mod schedule;

pub use error::{Error, Result};
