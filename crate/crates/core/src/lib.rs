//! Continuous signal representations, synthetic signals, training tasks,
//! metrics and a sweep harness for comparing them at fixed parameter budgets.

pub mod diffcore;
pub mod error;
pub mod fieldmodels;
pub mod harness;
pub mod metrics;
pub mod signals;
pub mod tasks;

pub use error::{Error, Result};
