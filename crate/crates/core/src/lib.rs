//! Feature-selection graph neural network for node classification.
//!
//! Graph propagation is decoupled from learning: [`features`] precomputes
//! `2K+1` hop-aggregated feature matrices once, and [`model`] trains a
//! shallow network that learns a softmax-constrained weight per matrix and
//! L2-normalizes each hop branch. [`experiments`] wraps training with
//! validation-based selection, grid search, ablations and hop sweeps.

pub mod datasets;
pub mod error;
pub mod experiments;
pub mod features;
pub mod graph;
pub mod matrix;
pub mod model;
pub mod optim;
pub mod presets;

pub use datasets::{Dataset, Split};
pub use error::{Error, Result};
pub use experiments::{RunResult, TrainConfig};
pub use features::HopFeatures;
pub use graph::{Graph, SparseMatrix};
pub use matrix::DenseMatrix;
pub use model::{FsgnnParams, ModelConfig, Variant};
pub use optim::{GroupHyper, GroupHypers};
