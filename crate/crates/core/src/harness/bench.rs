//! Wall-clock timing of inference and training steps per grid size.

use std::fmt::Write as _;
use std::time::Instant;

use super::config::TrainConfig;
use super::train::{fresh_checkpoint, train_step, TrainError};
use crate::model::GridBatch;

pub const WARMUP_STEPS: usize = 10;
pub const TIMED_STEPS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub size: usize,
    /// Mean milliseconds of one forward pass.
    pub infer_ms: f64,
    /// Mean milliseconds of forward, backward and optimiser update.
    pub train_ms: f64,
}

/// Times single-instance batches: `warmup` untimed steps, then the mean of
/// `steps` timed ones, for inference and for training.
pub fn benchmark_speed_with(
    config: &TrainConfig,
    sizes: &[usize],
    warmup: usize,
    steps: usize,
) -> Result<Vec<BenchRow>, TrainError> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let inst = config.task.generate(size, config.seed)?;
        let mut ck = fresh_checkpoint(config);
        let grid = GridBatch::new(inst.side(), &[inst.input.cells()])?;
        let batch = vec![inst];

        for _ in 0..warmup {
            std::hint::black_box(ck.params.logits(&grid)?);
        }
        let t = Instant::now();
        for _ in 0..steps {
            std::hint::black_box(ck.params.logits(&grid)?);
        }
        let infer_ms = t.elapsed().as_secs_f64() * 1000.0 / steps as f64;

        for _ in 0..warmup {
            train_step(&mut ck.params, &mut ck.optimizer, &batch, 1)?;
        }
        let t = Instant::now();
        for _ in 0..steps {
            train_step(&mut ck.params, &mut ck.optimizer, &batch, 1)?;
        }
        let train_ms = t.elapsed().as_secs_f64() * 1000.0 / steps as f64;
        log::info!("bench {size}x{size}: infer {infer_ms:.3} ms, train {train_ms:.3} ms");
        rows.push(BenchRow {
            size,
            infer_ms,
            train_ms,
        });
    }
    Ok(rows)
}

pub fn benchmark_speed(config: &TrainConfig, sizes: &[usize]) -> Result<Vec<BenchRow>, TrainError> {
    benchmark_speed_with(config, sizes, WARMUP_STEPS, TIMED_STEPS)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

pub fn bench_table(rows: &[BenchRow]) -> String {
    let mut s = String::from("| size | inference ms | training ms |\n|---|---|---|\n");
    for r in rows {
        let _ = writeln!(s, "| {0}x{0} | {1:.3} | {2:.3} |", r.size, r.infer_ms, r.train_ms);
    }
    s
}
