//! Kernel ridge regression for pairwise (dyadic) data: independent-task,
//! Kronecker, ordinary Kronecker least-squares and two-step models, exact
//! leave-one-out shortcuts and online primal updates.

pub mod cli;
pub mod error;
pub mod filters;
pub mod holdout;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod online;

pub use error::{Error, Result};
pub use holdout::{Hyperparams, Setting};
pub use kernels::{KernelMatrix, LabelMatrix};
pub use linalg::{DenseMatrix, EigenDecomposition};
pub use models::{DualModel, Variant};
pub use online::PrimalModel;
