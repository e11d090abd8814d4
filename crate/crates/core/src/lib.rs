//! Graded A_n Lie algebra data, fundamental representations, and
//! verification of nonabelian Toda solutions built from group elements.

pub mod bordered;
pub mod cartan;
pub mod config;
pub mod error;
pub mod flow;
pub mod identities;
pub mod matrix;
pub mod pipeline;
pub mod poly;
pub mod rep;
pub mod report;
pub mod scalar;
pub mod toda;
pub mod verifier;
pub mod wedge;

pub use config::ExperimentConfig;
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use pipeline::{run, Command};
pub use report::Report;
pub use scalar::{Dual, Rational, Real, Scalar};

pub type MatrixF64 = Matrix<f64>;
pub type MatrixQ = Matrix<Rational>;
