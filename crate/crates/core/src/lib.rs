//! Sampling-set design for graph-signal estimation.

// validation writes `!(x > 0.0)` on purpose so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod costs;
pub mod error;
pub mod estimator;
pub mod filter;
pub mod graph;
pub mod greedy;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod pgd;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};
pub use filter::FilterSpec;
pub use graph::WeightedGraph;
pub use model::ProblemInstance;
pub use scalar::Scalar;
pub use spectral::SpectralDecomposition;

/// Double-precision aliases used by the harness and the command-line tool.
pub type Graph = WeightedGraph<f64>;
pub type Instance = ProblemInstance<f64>;
pub type Decomposition = SpectralDecomposition<f64>;

/// Single-precision aliases.
pub type Graph32 = WeightedGraph<f32>;
pub type Instance32 = ProblemInstance<f32>;
pub type Decomposition32 = SpectralDecomposition<f32>;
