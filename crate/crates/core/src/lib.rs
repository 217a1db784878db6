//! Survey instrument fusion: text cleaning and topic models for open-ended
//! answers, a latent-attitude choice model shared by closed- and open-ended
//! instruments, counterfactual mapping between instruments, fit metrics and
//! simulators with known truth.
//!
//! Numeric kernels are generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below fix the common instantiations.

pub mod attitude;
pub mod corpus;
pub mod counterfactual;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod scalar;
pub mod simulate;
pub mod survey;
pub mod topics;

pub use linalg::Matrix;
pub use scalar::Scalar;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type DesignMatrix64 = survey::DesignMatrix<f64>;
pub type DesignMatrix32 = survey::DesignMatrix<f32>;
pub type ModelParams64 = attitude::ModelParams<f64>;
pub type ModelParams32 = attitude::ModelParams<f32>;
pub type Posterior64 = attitude::VariationalPosterior<f64>;
pub type Posterior32 = attitude::VariationalPosterior<f32>;
pub type FitResult64 = attitude::FitResult<f64>;
pub type FitResult32 = attitude::FitResult<f32>;
pub type GibbsMapResult64 = counterfactual::GibbsMapResult<f64>;
pub type GibbsMapResult32 = counterfactual::GibbsMapResult<f32>;
