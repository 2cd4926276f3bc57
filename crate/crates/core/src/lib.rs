//! Variable selection for high-dimensional linear models by tilted
//! correlation screening, with the usual greedy and screening baselines,
//! simulation designs and evaluation metrics.
//!
//! Numerical kernels are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the precision for common use.

pub mod baselines;
pub mod bench;
pub mod cli;
pub mod error;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod scalar;
pub mod simgen;
pub mod tcs;
pub mod thresholding;
pub mod tilting;

pub use error::{Error, Result};
pub use linalg::{normalize_columns, DesignMatrix, Matrix, ProjectionBasis, Response};
pub use scalar::Scalar;
pub use tcs::{run_tcs, PiChoice, SolutionPath, TcsConfig};
pub use tilting::{ConditioningCap, Rescaling};

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type Design64 = DesignMatrix<f64>;
pub type Design32 = DesignMatrix<f32>;
pub type Response64 = Response<f64>;
pub type Response32 = Response<f32>;
pub type Path64 = SolutionPath<f64>;
pub type Path32 = SolutionPath<f32>;
