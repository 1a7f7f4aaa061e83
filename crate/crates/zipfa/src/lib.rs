//! Zero-inflated Poisson factor analysis for non-negative count matrices.
//!
//! The crate decomposes a count matrix `A` into low-rank factors under a
//! zero-inflated Poisson model in which the structural-zero probability is
//! linked to the Poisson rate through a shared shape parameter. It provides:
//!
//! - [`data`]: count-matrix I/O, library-size offsets, imputation, CV masks;
//! - [`linalg`]: truncated SVD with a fixed sign convention;
//! - [`zipreg`]: the zero-inflated Poisson regression solver (EM with a
//!   Levenberg-Marquardt M-step);
//! - [`factorize`]: the alternating factorization loop;
//! - [`rankcv`]: masked cross-validation for picking the factor rank;
//! - [`sim`]: synthetic benchmark data, evaluation metrics, and the log-SVD
//!   baseline;
//! - [`cluster`]: complete-linkage hierarchical clustering used by the
//!   benchmark metrics.

pub mod cluster;
pub mod data;
pub mod error;
pub mod factorize;
pub mod linalg;
mod num;
pub mod rankcv;
pub mod sim;
pub mod zipreg;

pub use data::{CountMatrix, HeldOutMask, OffsetVector};
pub use error::{Error, Result};
pub use factorize::{FactorModel, FitOptions, OffsetPolicy};
pub use rankcv::{CvConfig, CvResult};
pub use sim::{Setting, SimulatedDataset, SimulationSpec};
pub use zipreg::{ZipRegFit, ZipRegProblem};
