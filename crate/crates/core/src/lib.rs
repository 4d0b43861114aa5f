//! Repro-samples inference for high-dimensional linear regression.
//!
//! The pipeline runs in three stages:
//!
//! 1. [`search::search_candidates`] collects candidate models by solving a
//!    penalized least-squares problem with simulated copies of the error.
//! 2. [`model_cs::model_confidence_set`] keeps the candidates whose observed
//!    model estimate is not in the low-probability tail of its conditional
//!    distribution.
//! 3. [`coef_cs`] builds coefficient confidence sets as unions, over the
//!    candidates, of per-model F-pivot ellipsoids.
//!
//! [`sim`] reproduces the simulation designs used to validate the method and
//! [`baselines`] the residual bootstrap used for comparison.

pub mod baselines;
pub mod coef_cs;
pub mod data;
pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod lasso;
pub mod linalg;
pub mod model_cs;
pub mod rng;
pub mod search;
pub mod sim;

pub use data::{Dataset, ModelSupport};
pub use error::{ReproError, Result};
pub use rng::Stream;
pub use search::{search_candidates, CandidateSet, SearchConfig, SearchMode};
