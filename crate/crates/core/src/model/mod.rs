//! The Matrix Shuffle-Exchange network.
//!
//! A `2^k x 2^k` grid of symbols is embedded, flattened into a `4^k`
//! sequence (Z-order by default), pushed through one or more Beneš blocks
//! of quaternary switch and shuffle layers, unflattened, and read out per
//! cell by a small head. Weights are shared within each half of a block,
//! so the parameter count does not depend on `k` and one set of
//! parameters runs on every grid size.

mod forward;
mod params;

pub use forward::{
    argmax_rows, benes_block, embed_batch, forward_from_embedded, matrix_se_forward, qsu_forward,
    qswitch_layer, recurrent_apply, BlockDepth, GridBatch, LayerCounter,
};
pub use params::{
    block_param_count, h_init, init_params, init_params_with, param_count_formula, s_init,
    BenesBlockWeights, BoundBlock, BoundParams, BoundQsu, InitOptions, ModelParams, QsuWeights,
    RESIDUAL_INIT,
};

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::perm::PermError;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Perm(#[from] PermError),
    #[error("symbol {symbol} outside input vocabulary of size {vocab}")]
    SymbolOutOfVocab { symbol: usize, vocab: usize },
    #[error("{0}")]
    BadGrid(String),
}
