//! Error-budget analysis for strapdown inertial navigation.
//!
//! The covariance of the navigation error state is propagated in decomposed
//! form: one matrix per initial-condition source and one per process-noise
//! source, each advanced by the same linear recursion as the full covariance.
//! Their sum reproduces the conventional propagation exactly, while the parts
//! attribute every bit of final attitude, velocity, and position variance to
//! the error source that caused it. A Monte-Carlo sampler over the same
//! discrete model validates the attribution statistically.

pub mod decomposition;
pub mod earth;
pub mod error;
pub mod montecarlo;
pub mod report;
pub mod runner;
pub mod scenario;
pub mod sins_model;
pub mod statespace;
pub mod trajectory;

pub use error::{Error, Result};
