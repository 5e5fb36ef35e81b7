//! Dense reverse-mode differentiation at desk scale.
//!
//! Everything is 64-bit and matrix-shaped (vectors are `n x 1`). A [`Tape`]
//! records eagerly-evaluated ops; [`Tape::backward`] runs one reverse sweep
//! and accumulates parameter adjoints into a [`GradBuf`] aligned with a
//! [`ParamStore`]. Layers ([`Mlp`], [`Rnn`]) register their parameters in
//! the store and build their forward graph on any tape, so one set of
//! weights can serve many per-series graphs.
//!
//! Shape mismatches are programmer errors and panic with the offending op;
//! non-finite forward values are runtime conditions and surface as
//! [`DiffError::NonFinite`] when the backward pass is requested.

mod adam;
mod checkpoint;
mod layers;
mod store;
mod tape;

pub use adam::AdamState;
pub use checkpoint::{load_checkpoint, read_into_store, save_checkpoint, store_to_json, ParamRecord};
pub use layers::{Mlp, Rnn, RnnKind};
pub use store::{GradBuf, ParamId, ParamStore};
pub use tape::{Tape, Var};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("backward requires a scalar root, got {rows}x{cols}")]
    NonScalarRoot { rows: usize, cols: usize },
    #[error("non-finite value produced by `{op}` node {node}")]
    NonFinite { op: &'static str, node: usize },
    #[error("checkpoint i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint is missing parameter `{0}`")]
    MissingParam(String),
    #[error("checkpoint shape mismatch for `{name}`: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        name: String,
        expected: (usize, usize),
        got: (usize, usize),
    },
}
