//! Bayesian linear regression with a log-Pareto-tailed error density.
//!
//! The crate computes posteriors for contaminated regression problems whose
//! outlying observations move off to infinity along a ray, and measures how
//! fast the posterior returns to the one built from the clean observations.

pub mod error;
pub mod heavytail;
pub mod lemmalab;
pub mod model;
pub mod posterior;
pub mod quad;
pub mod robustness;
pub mod rng;

pub use error::{Error, Result};
pub use heavytail::{CoefficientPrior, LptnDensity, ScalePrior};
pub use model::{RegressionProblem, Subset};
