use crate::autodiff::{Array, Scalar, Tape, Var};
use crate::perm::{cached_table, k_for_side, PermKind};

use super::params::{BoundBlock, BoundParams, BoundQsu, ModelParams};
use super::ModelError;

/// A batch of equally sized square symbol grids, row-major per item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridBatch {
    side: usize,
    k: u32,
    batch: usize,
    ids: Vec<usize>,
}

impl GridBatch {
    pub fn new(side: usize, grids: &[&[u32]]) -> Result<Self, ModelError> {
        if side < 2 || !side.is_power_of_two() {
            return Err(ModelError::BadGrid(format!(
                "side {side} is not a power of two >= 2 (pad first)"
            )));
        }
        if grids.is_empty() {
            return Err(ModelError::BadGrid("empty batch".into()));
        }
        let mut ids = Vec::with_capacity(grids.len() * side * side);
        for g in grids {
            if g.len() != side * side {
                return Err(ModelError::BadGrid(format!(
                    "grid of {} cells in a batch of side {side}",
                    g.len()
                )));
            }
            ids.extend(g.iter().map(|&s| s as usize));
        }
        Ok(Self {
            side,
            k: k_for_side(side),
            batch: grids.len(),
            ids,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn cells(&self) -> usize {
        self.side * self.side
    }
}

/// Depth of one Beneš block as actually executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BlockDepth {
    pub switch_layers: usize,
    pub shuffle_layers: usize,
}

/// Instrumentation of a forward pass.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LayerCounter {
    pub qsu_layers: usize,
    pub shuffles: usize,
    pub blocks: Vec<BlockDepth>,
}

/// `o = sigmoid(s) * i + h * (W GELU(RMSNorm(Z i)) + b)` over rows of width `4m`.
pub fn qsu_forward<T: Scalar>(tape: &mut Tape<T>, input: Var, w: &BoundQsu) -> Result<Var, ModelError> {
    let width = tape.value(w.z).shape()[0];
    if tape.value(input).last_dim() != width {
        return Err(ModelError::BadGrid(format!(
            "switch unit expects trailing extent {width}, got {:?}",
            tape.value(input).shape()
        )));
    }
    let zi = tape.linear(input, w.z, None)?;
    let normed = tape.rmsnorm(zi, w.rms_gain)?;
    let g = tape.gelu(normed);
    let c = tape.linear(g, w.w, Some(w.b))?;
    let gate = tape.sigmoid(w.s);
    let residual = tape.mul_last(input, gate)?;
    let update = tape.mul_scalar(c, w.h)?;
    Ok(tape.add(residual, update)?)
}

/// Applies one unit to every aligned group of 4 sequence positions.
///
/// `seq` is `[.., L, m]` with `L` divisible by 4; the group reshape is free
/// because 4 consecutive rows of width `m` are one row of width `4m`.
pub fn qswitch_layer<T: Scalar>(
    tape: &mut Tape<T>,
    seq: Var,
    w: &BoundQsu,
) -> Result<Var, ModelError> {
    let shape = tape.value(seq).shape().to_vec();
    if shape.len() < 2 || !shape[shape.len() - 2].is_multiple_of(4) {
        return Err(ModelError::BadGrid(format!(
            "switch layer needs a sequence length divisible by 4, got {shape:?}"
        )));
    }
    let m = shape[shape.len() - 1];
    let groups = tape.value(seq).len() / (4 * m);
    let grouped = tape.reshape(seq, vec![groups, 4 * m])?;
    let out = qsu_forward(tape, grouped, w)?;
    Ok(tape.reshape(out, shape)?)
}

/// `(k-1)` switch+shuffle layers, `(k-1)` switch+inverse-shuffle layers,
/// then one closing switch layer. `seq` is `[batch, 4^k, m]`.
pub fn benes_block<T: Scalar>(
    tape: &mut Tape<T>,
    seq: Var,
    w: &BoundBlock,
    k: u32,
    counter: &mut LayerCounter,
) -> Result<Var, ModelError> {
    let len = tape.value(seq).shape().get(1).copied().unwrap_or(0);
    if len != 1usize << (2 * k) {
        return Err(ModelError::BadGrid(format!(
            "block for k={k} got sequence length {len}"
        )));
    }
    let mut depth = BlockDepth::default();
    let mut x = seq;
    if k > 1 {
        let right = cached_table(k, PermKind::QshuffleRight)?;
        let left = cached_table(k, PermKind::QshuffleLeft)?;
        for _ in 0..k - 1 {
            x = qswitch_layer(tape, x, &w.forward_shared)?;
            x = tape.permute_axis(x, 1, right.indices())?;
            depth.switch_layers += 1;
            depth.shuffle_layers += 1;
        }
        for _ in 0..k - 1 {
            x = qswitch_layer(tape, x, &w.mirror_shared)?;
            x = tape.permute_axis(x, 1, left.indices())?;
            depth.switch_layers += 1;
            depth.shuffle_layers += 1;
        }
    }
    x = qswitch_layer(tape, x, &w.final_layer)?;
    depth.switch_layers += 1;
    counter.qsu_layers += depth.switch_layers;
    counter.shuffles += depth.shuffle_layers;
    counter.blocks.push(depth);
    Ok(x)
}

/// Embedding lookup in grid (row-major) order: `[batch, n^2, m]`.
pub fn embed_batch<T: Scalar>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    batch: &GridBatch,
) -> Result<Var, ModelError> {
    if let Some(&bad) = batch.ids.iter().find(|&&s| s >= p.vocab_in) {
        return Err(ModelError::SymbolOutOfVocab {
            symbol: bad,
            vocab: p.vocab_in,
        });
    }
    let e = tape.embed(p.embedding, &batch.ids)?;
    Ok(tape.reshape(e, vec![batch.batch, batch.cells(), p.m])?)
}

fn reorder<T: Scalar>(tape: &mut Tape<T>, x: Var, kind: PermKind, k: u32) -> Result<Var, ModelError> {
    let table = cached_table(k, kind)?;
    Ok(tape.permute_axis(x, 1, table.indices())?)
}

fn block_stack<T: Scalar>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    seq: Var,
    k: u32,
    counter: &mut LayerCounter,
) -> Result<Var, ModelError> {
    let mut x = seq;
    for blk in &p.blocks {
        x = benes_block(tape, x, blk, k, counter)?;
    }
    Ok(x)
}

/// GELU layer then output layer, per position: `[batch * n^2, vocab_out]`.
fn head<T: Scalar>(tape: &mut Tape<T>, p: &BoundParams, grid_hidden: Var) -> Result<Var, ModelError> {
    let rows = tape.value(grid_hidden).len() / p.m;
    let flat = tape.reshape(grid_hidden, vec![rows, p.m])?;
    let h = tape.linear(flat, p.head_hidden_w, Some(p.head_hidden_b))?;
    let h = tape.gelu(h);
    Ok(tape.linear(h, p.head_out_w, Some(p.head_out_b))?)
}

/// Everything after the embedding: flatten, Beneš blocks, unflatten, head.
///
/// `embedded` is `[batch, 4^k, m]` in grid order.
pub fn forward_from_embedded<T: Scalar>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    embedded: Var,
    k: u32,
    counter: &mut LayerCounter,
) -> Result<Var, ModelError> {
    let seq = reorder(tape, embedded, p.flatten_kind.flatten(), k)?;
    let seq = block_stack(tape, p, seq, k, counter)?;
    let grid = reorder(tape, seq, p.flatten_kind.unflatten(), k)?;
    head(tape, p, grid)
}

/// Logits `[batch * n^2, vocab_out]`, rows in row-major grid order per item.
pub fn matrix_se_forward<T: Scalar>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    batch: &GridBatch,
    counter: &mut LayerCounter,
) -> Result<Var, ModelError> {
    let e = embed_batch(tape, p, batch)?;
    forward_from_embedded(tape, p, e, batch.k, counter)
}

/// Runs the block stack `steps` times with shared weights.
///
/// The hidden sequence is carried between steps and the embedded input is
/// added back before every step after the first. The head reads out logits
/// after each step.
pub fn recurrent_apply<T: Scalar>(
    tape: &mut Tape<T>,
    p: &BoundParams,
    batch: &GridBatch,
    steps: usize,
    counter: &mut LayerCounter,
) -> Result<Vec<Var>, ModelError> {
    if steps == 0 {
        return Err(ModelError::BadGrid("recurrent steps must be >= 1".into()));
    }
    let k = batch.k;
    let e = embed_batch(tape, p, batch)?;
    let givens = reorder(tape, e, p.flatten_kind.flatten(), k)?;
    let mut hidden = givens;
    let mut out = Vec::with_capacity(steps);
    for step in 0..steps {
        if step > 0 {
            hidden = tape.add(hidden, givens)?;
        }
        hidden = block_stack(tape, p, hidden, k, counter)?;
        let grid = reorder(tape, hidden, p.flatten_kind.unflatten(), k)?;
        out.push(head(tape, p, grid)?);
    }
    Ok(out)
}

/// Row-wise argmax of a `[rows, classes]` array.
pub fn argmax_rows<T: Scalar>(logits: &Array<T>) -> Vec<usize> {
    let c = logits.last_dim();
    logits
        .data()
        .chunks_exact(c)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

impl<T: Scalar> ModelParams<T> {
    /// Inference-only logits for a batch.
    pub fn logits(&self, batch: &GridBatch) -> Result<Array<T>, ModelError> {
        let mut tape = Tape::new();
        let bound = self.bind_frozen(&mut tape);
        let mut counter = LayerCounter::default();
        let out = matrix_se_forward(&mut tape, &bound, batch, &mut counter)?;
        Ok(tape.value(out).clone())
    }

    /// Inference-only logits of the last recurrent step.
    pub fn recurrent_logits(&self, batch: &GridBatch, steps: usize) -> Result<Array<T>, ModelError> {
        let mut tape = Tape::new();
        let bound = self.bind_frozen(&mut tape);
        let mut counter = LayerCounter::default();
        let outs = recurrent_apply(&mut tape, &bound, batch, steps, &mut counter)?;
        Ok(tape.value(*outs.last().unwrap()).clone())
    }

    /// Binds parameters as constants, so no gradient bookkeeping happens.
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> BoundParams {
        self.bind_with(tape, false)
    }
}
