//! Size-stratified evaluation.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{argmax_rows, GridBatch, ModelError, ModelParams};
use crate::tasks::{TaskError, TaskId, TaskInstance};

/// Seed of the evaluation instance stream, fixed so tables are comparable.
pub const EVAL_SEED: u64 = 0xE7A1_5EED;
/// Upper bound on grid cells per inference batch.
const CELLS_PER_BATCH: usize = 16 * 1024;

pub trait Predictor {
    /// One predicted grid (row-major, padded side) per instance.
    fn predict(&self, batch: &[TaskInstance]) -> Result<Vec<Vec<u32>>, ModelError>;
}

pub struct ModelPredictor<'a> {
    pub params: &'a ModelParams,
    pub recurrent_steps: usize,
}

impl Predictor for ModelPredictor<'_> {
    fn predict(&self, batch: &[TaskInstance]) -> Result<Vec<Vec<u32>>, ModelError> {
        let mut out = Vec::with_capacity(batch.len());
        let side = match batch.first() {
            Some(b) => b.side(),
            None => return Ok(out),
        };
        let per = (CELLS_PER_BATCH / (side * side)).max(1);
        for chunk in batch.chunks(per) {
            let inputs: Vec<&[u32]> = chunk.iter().map(|i| i.input.cells()).collect();
            let grid = GridBatch::new(side, &inputs)?;
            let logits = if self.recurrent_steps > 1 {
                self.params.recurrent_logits(&grid, self.recurrent_steps)?
            } else {
                self.params.logits(&grid)?
            };
            let pred = argmax_rows(&logits);
            out.extend(
                pred.chunks(side * side)
                    .map(|p| p.iter().map(|&x| x as u32).collect()),
            );
        }
        Ok(out)
    }
}

/// Returns the targets themselves; a harness self-test.
pub struct OraclePredictor;

impl Predictor for OraclePredictor {
    fn predict(&self, batch: &[TaskInstance]) -> Result<Vec<Vec<u32>>, ModelError> {
        Ok(batch.iter().map(|i| i.target.cells().to_vec()).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeAccuracy {
    pub size: usize,
    pub per_element: f64,
    pub per_instance: f64,
    pub instances: usize,
    /// Whether `size` was part of the training curriculum.
    pub trained: bool,
}

/// Deterministic evaluation instances for `(task, size)`.
pub fn eval_instances(task: TaskId, size: usize, count: usize) -> Result<Vec<TaskInstance>, TaskError> {
    let mut rng = ChaCha8Rng::seed_from_u64(EVAL_SEED ^ (size as u64).rotate_left(32));
    (0..count).map(|_| task.generate(size, rng.gen())).collect()
}

/// Accuracy of `predictor` over `instances`, all of the same side.
pub fn score(predictor: &dyn Predictor, instances: &[TaskInstance]) -> Result<(f64, f64), ModelError> {
    let mut by_side: std::collections::BTreeMap<usize, Vec<TaskInstance>> = Default::default();
    for i in instances {
        by_side.entry(i.side()).or_default().push(i.clone());
    }
    let (mut correct, mut masked, mut whole) = (0usize, 0usize, 0usize);
    for group in by_side.values() {
        for (inst, pred) in group.iter().zip(predictor.predict(group)?) {
            let c = inst.correct_count(&pred);
            let m = inst.masked_count();
            correct += c;
            masked += m;
            whole += usize::from(c == m);
        }
    }
    Ok((
        correct as f64 / masked.max(1) as f64,
        whole as f64 / instances.len().max(1) as f64,
    ))
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Per-size accuracy over freshly generated instances.
pub fn evaluate(
    predictor: &dyn Predictor,
    task: TaskId,
    sizes: &[usize],
    instances_per_size: usize,
    max_train_size: usize,
) -> Result<Vec<SizeAccuracy>, EvalError> {
    sizes
        .iter()
        .map(|&size| {
            let insts = eval_instances(task, size, instances_per_size)?;
            let (per_element, per_instance) = score(predictor, &insts)?;
            Ok(SizeAccuracy {
                size,
                per_element,
                per_instance,
                instances: insts.len(),
                trained: size <= max_train_size,
            })
        })
        .collect()
}

/// Markdown table with one column per size; trained sizes are marked `*`.
pub fn accuracy_table(task: TaskId, rows: &[SizeAccuracy]) -> String {
    let mut s = String::new();
    let heads: Vec<String> = rows
        .iter()
        .map(|r| format!("{0}x{0}{1}", r.size, if r.trained { "*" } else { "" }))
        .collect();
    let _ = writeln!(s, "| {} | {} |", task, heads.join(" | "));
    let _ = writeln!(s, "|---|{}", "---|".repeat(rows.len()));
    let fmt = |f: &dyn Fn(&SizeAccuracy) -> f64| {
        rows.iter().map(|r| format!("{:.3}", f(r))).collect::<Vec<_>>().join(" | ")
    };
    let _ = writeln!(s, "| per-element | {} |", fmt(&|r| r.per_element));
    let _ = writeln!(s, "| per-instance | {} |", fmt(&|r| r.per_instance));
    s.push_str("\n`*` trained size\n");
    s
}
