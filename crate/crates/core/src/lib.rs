//! Fairness-aware unsupervised feature selection.
//!
//! Selects `k` of `d` features whose kernel matrix stays aligned with the
//! full feature space while staying unaligned with a set of protected
//! attributes, then scores the selection by clustering utility and
//! clustering fairness.
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`dataset`] | data model, CSV ingestion, synthetic generator |
//! | [`kernel`] | Gram matrices, centering, centered alignment |
//! | [`fufs`] | objective, gradients, projected optimizer, ranking |
//! | [`eval`] | k-means restarts, ACC / NMI / Balance / Proportion |
//! | [`cli`] | command implementations behind the `fairsel` binary |

pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fufs;
pub mod gradcheck;
pub mod kernel;

pub use dataset::{
    generate_synthetic, load_csv, Dataset, FeatureRole, SyntheticData, SyntheticSpec,
};
pub use error::{ErrorClass, FairselError, Result};
pub use eval::{evaluate_selection, EvalOptions, EvalReport};
pub use fufs::{optimize, FufsConfig, IndicatorPair, SelectionResult};
pub use kernel::{GramMatrix, KernelSpec};
