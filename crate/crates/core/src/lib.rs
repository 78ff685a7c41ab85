//! Exact-recovery experiments for the Gaussian weighted stochastic block model
//! and the Gaussian weighted planted dense subgraph model.
//!
//! The crate samples both models, runs the exhaustive, spectral and
//! semidefinite estimators, builds and checks dual certificates for the
//! planted solution, evaluates the swap-based impossibility witnesses, and
//! drives seeded Monte Carlo sweeps over parameter grids.

pub mod certificates;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
pub use linalg::SymMatrix;
pub use model::{DiagonalMode, LabelKind, LabelVector, ModelKind, ModelParams, WeightedGraph};
