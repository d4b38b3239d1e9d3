//! Curriculum training loop.

use std::collections::{BTreeMap, VecDeque};
use std::fs::{self, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::mpsc::sync_channel;
use std::sync::Arc;
use std::thread;
use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::checkpoint::{save_checkpoint, Checkpoint, CheckpointError};
use super::config::{ConfigError, TrainConfig};
use super::curriculum::{curriculum_sample, InstancePool};
use crate::autodiff::{radam_step, Array, RAdamState, Tape, Var};
use crate::model::{
    argmax_rows, init_params_with, matrix_se_forward, recurrent_apply, GridBatch, InitOptions,
    LayerCounter, ModelError, ModelParams,
};
use crate::tasks::{sudoku, TaskError, TaskId, TaskInstance};

/// Window of the loss moving average used for early stopping.
pub const LOSS_AVERAGE_WINDOW: usize = 1000;
/// Salt separating the data stream from the weight-init stream.
const DATA_SALT: u64 = 0x5EED_DA7A;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("non-finite loss at step {step}; training aborted")]
    NonFiniteLoss { step: u64 },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One line of `metrics.jsonl`.
#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub task: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub size: Option<usize>,
    pub loss: f64,
    pub per_element_acc: f64,
    pub per_instance_acc: f64,
    pub ms_per_step: f64,
}

/// Loss and accuracy counts of one optimisation step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub correct: usize,
    pub masked: usize,
    pub instances_correct: usize,
    pub instances: usize,
}

impl StepStats {
    fn absorb(&mut self, o: &StepStats) {
        self.loss += o.loss;
        self.correct += o.correct;
        self.masked += o.masked;
        self.instances_correct += o.instances_correct;
        self.instances += o.instances;
    }
}

/// Sudoku training set; each draw gets a fresh validity-preserving augmentation.
pub struct SudokuPool(pub Vec<TaskInstance>);

impl InstancePool for SudokuPool {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn get(&self, index: usize, augment_seed: u64) -> TaskInstance {
        sudoku::sudoku_augment(&self.0[index], augment_seed)
    }
}

#[derive(Default)]
pub struct TrainOptions {
    /// Receives `metrics.jsonl` and `checkpoint.ckpt` when set.
    pub out_dir: Option<PathBuf>,
    pub resume: Option<Checkpoint>,
    /// Stop once this many steps are complete, as if interrupted.
    pub until_step: Option<u64>,
    pub sudoku_pool: Option<Arc<dyn InstancePool>>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub stopped_early: bool,
    /// Mean loss of the last metrics window.
    pub last_loss: f64,
    pub records: Vec<MetricsRecord>,
}

/// RNG of training step `step`; a pure function of `(seed, step)`.
pub fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ DATA_SALT);
    rng.set_stream(step);
    rng
}

pub fn fresh_checkpoint(config: &TrainConfig) -> Checkpoint {
    let params = init_params_with(
        config.m,
        config.blocks,
        config.task.vocab_in(),
        config.task.vocab_out(),
        config.seed,
        InitOptions {
            flatten_kind: config.flatten_kind,
            ..InitOptions::default()
        },
    );
    let optimizer = RAdamState::new(
        params.named_tensors().into_iter().map(|(_, a)| a),
        config.learning_rate,
    );
    Checkpoint {
        config: config.clone(),
        params,
        optimizer,
        step: 0,
    }
}

/// Builds the loss graph of `batch`: the mean cross-entropy over all masked
/// cells, summed over recurrent steps. Items are grouped by grid side.
pub fn batch_loss(
    tape: &mut Tape,
    params: &crate::model::BoundParams,
    batch: &[TaskInstance],
    recurrent_steps: usize,
) -> Result<(Var, StepStats), ModelError> {
    let mut groups: BTreeMap<usize, Vec<&TaskInstance>> = BTreeMap::new();
    for inst in batch {
        groups.entry(inst.side()).or_default().push(inst);
    }
    let total_masked: usize = batch.iter().map(TaskInstance::masked_count).sum();
    let mut stats = StepStats::default();
    let mut loss: Option<Var> = None;
    for (side, items) in groups {
        let inputs: Vec<&[u32]> = items.iter().map(|i| i.input.cells()).collect();
        let grid = GridBatch::new(side, &inputs)?;
        let labels: Vec<usize> = items
            .iter()
            .flat_map(|i| i.target.cells().iter().map(|&t| t as usize))
            .collect();
        let mask: Vec<u8> = items.iter().flat_map(|i| i.mask.iter().copied()).collect();
        let mut counter = LayerCounter::default();
        let outputs = if recurrent_steps > 1 {
            recurrent_apply(tape, params, &grid, recurrent_steps, &mut counter)?
        } else {
            vec![matrix_se_forward(tape, params, &grid, &mut counter)?]
        };
        let weight = items.iter().map(|i| i.masked_count()).sum::<usize>() as f32 / total_masked as f32;
        for &out in &outputs {
            let l = tape.softmax_xent_loss(out, &labels, &mask)?;
            let l = tape.scale(l, weight);
            loss = Some(match loss {
                Some(acc) => tape.add(acc, l)?,
                None => l,
            });
        }
        let pred = argmax_rows(tape.value(*outputs.last().expect("at least one step")));
        let cells = side * side;
        for (i, inst) in items.iter().enumerate() {
            let p: Vec<u32> = pred[i * cells..(i + 1) * cells].iter().map(|&x| x as u32).collect();
            let correct = inst.correct_count(&p);
            let masked = inst.masked_count();
            stats.correct += correct;
            stats.masked += masked;
            stats.instances += 1;
            stats.instances_correct += usize::from(correct == masked);
        }
    }
    let loss = loss.expect("non-empty batch");
    stats.loss = tape.value(loss).item() as f64;
    Ok((loss, stats))
}

/// One forward/backward/update. Returns `None` if the loss is not finite,
/// in which case the parameters are untouched.
pub fn train_step(
    params: &mut ModelParams,
    optimizer: &mut RAdamState,
    batch: &[TaskInstance],
    recurrent_steps: usize,
) -> Result<Option<StepStats>, ModelError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let (loss, stats) = batch_loss(&mut tape, &bound, batch, recurrent_steps)?;
    if !stats.loss.is_finite() {
        return Ok(None);
    }
    let mut grads = tape.backward(loss).map_err(ModelError::from)?;
    drop(tape);
    let g = params.collect_grads(&bound, &mut grads);
    let grefs: Vec<&Array> = g.iter().collect();
    radam_step(&mut params.tensors_mut(), &grefs, optimizer).map_err(ModelError::from)?;
    Ok(Some(stats))
}

struct EarlyStop {
    window: VecDeque<f64>,
    sum: f64,
    best: f64,
    best_step: u64,
    patience: u64,
}

impl EarlyStop {
    fn push(&mut self, step: u64, loss: f64) -> bool {
        self.window.push_back(loss);
        self.sum += loss;
        if self.window.len() > LOSS_AVERAGE_WINDOW {
            self.sum -= self.window.pop_front().unwrap_or(0.0);
        }
        if self.patience == 0 || self.window.len() < LOSS_AVERAGE_WINDOW {
            return false;
        }
        let avg = self.sum / self.window.len() as f64;
        if avg < self.best {
            self.best = avg;
            self.best_step = step;
        }
        step - self.best_step >= self.patience
    }
}

fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Runs `config.steps` optimisation steps (or until `opts.until_step`).
pub fn train(config: &TrainConfig, opts: TrainOptions) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let mut ck = match opts.resume {
        Some(ck) => ck,
        None => fresh_checkpoint(config),
    };
    ck.config = config.clone();
    ck.optimizer.learning_rate = config.learning_rate;
    let start = ck.step;
    let end = opts.until_step.map_or(config.steps, |u| u.min(config.steps));
    if config.task == TaskId::Sudoku && opts.sudoku_pool.is_none() {
        return Err(TaskError::NotGenerated.into());
    }

    let ck_path = opts.out_dir.as_ref().map(|d| d.join("checkpoint.ckpt"));
    let mut metrics = match &opts.out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            let path = dir.join("metrics.jsonl");
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(io_err(&path))?;
            Some(BufWriter::new(f))
        }
        None => None,
    };

    // producer: batches for every step, in order, through a bounded queue
    let (tx, rx) = sync_channel::<Result<Vec<TaskInstance>, TaskError>>(4);
    let producer_cfg = config.clone();
    let pool = opts.sudoku_pool.clone();
    let producer = thread::spawn(move || {
        for step in start..end {
            let mut rng = step_rng(producer_cfg.seed, step);
            let batch = curriculum_sample(&producer_cfg, step, &mut rng, pool.as_deref());
            if tx.send(batch).is_err() {
                break;
            }
        }
    });

    let mut early = EarlyStop {
        window: VecDeque::with_capacity(LOSS_AVERAGE_WINDOW + 1),
        sum: 0.0,
        best: f64::INFINITY,
        best_step: start,
        patience: config.patience,
    };
    let mut window = StepStats::default();
    let mut window_steps = 0u64;
    let mut window_start = Instant::now();
    let mut records = Vec::new();
    let mut last_loss = f64::NAN;
    let mut stopped_early = false;
    let mut failure = None;

    for step in start..end {
        let batch = match rx.recv() {
            Ok(b) => b?,
            Err(_) => break,
        };
        let stats = match train_step(&mut ck.params, &mut ck.optimizer, &batch, config.recurrent_steps)? {
            Some(s) => s,
            None => {
                failure = Some(TrainError::NonFiniteLoss { step: step + 1 });
                break;
            }
        };
        ck.step = step + 1;
        window.absorb(&stats);
        window_steps += 1;

        if ck.step % config.metrics_every == 0 || ck.step == end {
            let elapsed = window_start.elapsed().as_secs_f64() * 1000.0;
            let rec = MetricsRecord {
                step: ck.step,
                task: config.task.to_string(),
                size: None,
                loss: window.loss / window_steps as f64,
                per_element_acc: window.correct as f64 / window.masked.max(1) as f64,
                per_instance_acc: window.instances_correct as f64 / window.instances.max(1) as f64,
                ms_per_step: elapsed / window_steps as f64,
            };
            info!(
                "step {} loss {:.4} acc {:.4}/{:.4} {:.0} ms/step",
                rec.step, rec.loss, rec.per_element_acc, rec.per_instance_acc, rec.ms_per_step
            );
            if let (Some(w), Some(dir)) = (metrics.as_mut(), opts.out_dir.as_ref()) {
                let line = serde_json::to_string(&rec).expect("plain record");
                writeln!(w, "{line}")
                    .and_then(|_| w.flush())
                    .map_err(io_err(dir))?;
            }
            last_loss = rec.loss;
            records.push(rec);
            window = StepStats::default();
            window_steps = 0;
            window_start = Instant::now();
        }
        if let Some(p) = &ck_path {
            if ck.step % config.checkpoint_every == 0 {
                save_checkpoint(p, &ck)?;
            }
        }
        if early.push(ck.step, stats.loss) {
            info!(
                "early stop at step {}: no improvement of the {}-step loss average for {} steps",
                ck.step, LOSS_AVERAGE_WINDOW, config.patience
            );
            stopped_early = true;
            break;
        }
    }
    drop(rx);
    let _ = producer.join();

    if let Some(err) = failure {
        warn!("{err}; keeping the last saved checkpoint");
        return Err(err);
    }
    if let Some(p) = &ck_path {
        save_checkpoint(p, &ck)?;
    }
    Ok(TrainOutcome {
        checkpoint: ck,
        stopped_early,
        last_loss,
        records,
    })
}
