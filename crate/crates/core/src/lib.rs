//! Outlier-robust linear regression under ε-contamination.
//!
//! Instance generators and hard pairs, contamination adversaries, four estimators
//! (OLS, robust gradient descent, subset search, a degree-4 moment relaxation),
//! diagnostics and an experiment harness.

pub mod contamination;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod lb;
pub mod linalg;
pub mod model;
pub mod pseudomoments;
pub mod quad;

pub use error::{Error, Result};
