//! Mediation tests under composite nulls with adaptive bootstrap calibration.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix it to `f64`, which is what the command-line tool uses.

pub mod data;
pub mod error;
pub mod glm;
pub mod inference;
pub mod js;
pub mod linalg;
pub mod multi;
pub mod pipeline;
pub mod poc;
pub mod regression;
pub mod resampling;
pub mod scalar;
pub mod sim;
pub mod tuning;

pub use error::{MedError, Result};
pub use inference::{lambda_n, AbConfig, Decision, Method, TestResult};
pub use pipeline::{run_test, Report};
pub use resampling::{BootstrapConfig, Scheme};
pub use scalar::Scalar;

pub type Dataset = data::Dataset<f64>;
pub type Dataset32 = data::Dataset<f32>;
pub type LinearFit = regression::LinearFit<f64>;
pub type LogisticFit = regression::LogisticFit<f64>;
pub type PocComponents = poc::PocComponents<f64>;
pub type BootstrapDistribution = resampling::BootstrapDistribution<f64>;
