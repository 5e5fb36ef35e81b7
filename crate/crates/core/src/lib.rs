//! Clustering of interval-censored multivariate time-series with joint
//! inference of per-series delayed-entry offsets.
//!
//! The crate is organized around a small number of subsystems:
//!
//! - [`data`]: the canonical trajectory/dataset model and its JSONL format,
//! - [`synth`]: synthetic benchmark generators (sigmoid, quadratic, spline)
//!   plus missingness injection and window censoring,
//! - [`diff`]: a dense reverse-mode differentiation tape with the MLP/GRU
//!   layers and the Adam optimizer the model needs,
//! - [`sublign`]: the variational model — ELBO, alternating grid-search /
//!   gradient training, and posterior clustering,
//! - [`ident`]: the exact noiseless identification procedure (inverse link,
//!   polynomial fits, root finding, canonical refit) and the shared k-means,
//! - [`baseline`]: the greedy cluster-then-align least-squares baseline,
//! - [`metrics`]: ARI, swaps, Pearson, permutation matching, paired t-test,
//! - [`harness`]: trial orchestration (splits, hyperparameter selection,
//!   report rendering, censor probe).

pub mod baseline;
pub mod data;
pub mod diff;
pub mod harness;
pub mod ident;
pub mod metrics;
pub mod sublign;
pub mod synth;

mod util;

pub use data::{AlignmentGrid, Dataset, LinkFamily, LinkSpec, SubLignConfig, Trajectory};
