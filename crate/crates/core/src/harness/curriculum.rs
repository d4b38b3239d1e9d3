//! Easy-to-hard size schedule shared by all batch items.
//!
//! Size rank `r` of `R` gets weight `exp(-TEMPERATURE * max(0, r - p * R))`
//! where `p = step / steps`. At the start nearly all mass sits on the
//! smallest size; once `p >= (R - 1) / R` the schedule is uniform.

use rand::Rng;

use super::config::TrainConfig;
use crate::tasks::{TaskError, TaskId, TaskInstance};

pub const TEMPERATURE: f64 = 3.0;

/// Normalised sampling probabilities over `ranks` sizes at `progress` in `[0, 1]`.
pub fn size_weights(ranks: usize, progress: f64) -> Vec<f64> {
    let frontier = progress.clamp(0.0, 1.0) * ranks as f64;
    let raw: Vec<f64> = (0..ranks)
        .map(|r| (-TEMPERATURE * (r as f64 - frontier).max(0.0)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

pub fn sample_rank(weights: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Source of Sudoku training instances, indexed by a random draw.
pub trait InstancePool: Send + Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn get(&self, index: usize, augment_seed: u64) -> TaskInstance;
}

/// One training batch for `step`, drawn from `rng`.
///
/// Generated tasks draw a size per item from the schedule and a fresh
/// instance seed. Sudoku draws from `pool` with a random augmentation.
pub fn curriculum_sample(
    config: &TrainConfig,
    step: u64,
    rng: &mut impl Rng,
    pool: Option<&dyn InstancePool>,
) -> Result<Vec<TaskInstance>, TaskError> {
    if config.task == TaskId::Sudoku {
        let pool = pool.ok_or(TaskError::NotGenerated)?;
        return Ok((0..config.batch_size)
            .map(|_| {
                let i = rng.gen_range(0..pool.len());
                pool.get(i, rng.gen())
            })
            .collect());
    }
    let sizes = config.train_sizes();
    let progress = if config.steps == 0 {
        1.0
    } else {
        step as f64 / config.steps as f64
    };
    let weights = size_weights(sizes.len(), progress);
    (0..config.batch_size)
        .map(|_| {
            let n = sizes[sample_rank(&weights, rng)];
            config.task.generate(n, rng.gen())
        })
        .collect()
}
