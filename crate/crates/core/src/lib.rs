//! Joint and individual subspace decomposition of a network and its node
//! covariates: a spectral estimator, a block-coordinate refinement, seeded
//! simulation designs and evaluation metrics.

pub mod cli;
pub mod error;
pub mod eval;
pub mod io;
mod kv;
pub mod linalg;
pub mod model;
pub mod refine;
pub mod simgen;
pub mod spectral;

pub use error::{Error, Result};
pub use linalg::OrthonormalBasis;
pub use model::{AdjacencyMatrix, CovariateMatrix, Decomposition, GroundTruth, Ranks};
pub use refine::{refine_decompose, RefineConfig, RefineOutput};
pub use spectral::spectral_decompose;
