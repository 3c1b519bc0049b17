//! Long-horizon forecasting with doubly residual basis-expansion networks.
//!
//! The engine implements NBEATS-style blocks (generic, polynomial trend,
//! harmonic seasonality) and mixed-data-sampling blocks that pool their
//! inputs and emit a small number of forecast knots, up-sampled to the full
//! horizon by linear interpolation. Around the model sit windowing,
//! training with L1 regularization and early stopping, mean ensembles, a
//! benchmark harness and a seeded random hyperparameter search.

pub mod blocks;
pub mod data;
pub mod error;
pub mod eval;
pub mod hypersearch;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod training;

pub use error::{Error, ErrorKind, Result};
