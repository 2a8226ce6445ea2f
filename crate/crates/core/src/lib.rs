//! Numerical laboratory for log-concave ensembles.
//!
//! The crate samples the random-vector laws of interest (isotropic product
//! laws, uniform measure on convex polytopes, the heavy `hG` counterexample),
//! measures spectral statistics of the resulting random matrices, computes
//! restricted norms and chaining nets, evaluates the closed-form bounds these
//! statistics are compared against, and drives reproducible Monte Carlo
//! campaigns over all of it.

pub mod bounds;
pub mod chaining;
pub mod ensembles;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mcmc;
pub mod processes;
pub mod restricted;
pub mod seeding;
pub mod spectral;

pub use ensembles::{EnsembleSpec, SampleMatrix};
pub use error::{Error, Result};
pub use mcmc::{IsotropizationResult, Polytope};
pub use spectral::SpectrumSummary;
