//! Command-line front end: `train`, `eval`, `bench`, `gen` and `ablate`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::harness::bench::{bench_table, benchmark_speed_with, loglog_slope, TIMED_STEPS, WARMUP_STEPS};
use crate::harness::checkpoint::{load_checkpoint, CheckpointError};
use crate::harness::config::{parse_sizes, ConfigError, TrainConfig};
use crate::harness::eval::{accuracy_table, evaluate, score, ModelPredictor, SizeAccuracy};
use crate::harness::train::{train, SudokuPool, TrainError, TrainOptions, TrainOutcome};
use crate::perm::FlattenKind;
use crate::tasks::{sudoku, TaskError, TaskId, TaskInstance};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<TaskError> for CliError {
    fn from(e: TaskError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        match e {
            CheckpointError::Config(c) => CliError::Config(c.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(c) => c.into(),
            TrainError::NonFiniteLoss { .. } => CliError::Numeric(e.to_string()),
            TrainError::Checkpoint(c) => c.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<crate::harness::eval::EvalError> for CliError {
    fn from(e: crate::harness::eval::EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<crate::model::ModelError> for CliError {
    fn from(e: crate::model::ModelError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "matrix-se", version, about = "Matrix Shuffle-Exchange networks on algorithmic grid tasks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model with the curriculum and write checkpoint, metrics and accuracy table.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint per size.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Comma-separated sizes; defaults to the checkpoint's eval sizes.
        #[arg(long)]
        sizes: Option<String>,
        /// Instances per size; defaults to the checkpoint's eval-instances.
        #[arg(long)]
        instances: Option<usize>,
        /// Evaluate on another task with the same vocabulary.
        #[arg(long)]
        task: Option<String>,
        /// Sudoku CSV to evaluate on.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time inference and training steps per size.
    Bench {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "16,32,64,128")]
        sizes: String,
        #[arg(long, default_value_t = TIMED_STEPS)]
        timed_steps: usize,
        #[arg(long, default_value_t = WARMUP_STEPS)]
        warmup: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write task instances as text (Sudoku: puzzle,solution CSV lines).
    Gen {
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 8)]
        size: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Givens per generated Sudoku puzzle.
        #[arg(long, default_value_t = 30)]
        givens: usize,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train twice, Z-order versus raster flatten, and compare accuracy.
    Ablate {
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output directory.
    #[arg(long, default_value = "run")]
    pub out: PathBuf,
}

/// Config file plus one flag per config key; flags win over the file.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// key=value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub maps: Option<String>,
    #[arg(long)]
    pub blocks: Option<String>,
    #[arg(long)]
    pub flatten: Option<String>,
    #[arg(long = "max-size")]
    pub max_size: Option<String>,
    #[arg(long = "eval-sizes")]
    pub eval_sizes: Option<String>,
    #[arg(long)]
    pub steps: Option<String>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long = "recurrent-steps")]
    pub recurrent_steps: Option<String>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long = "metrics-every")]
    pub metrics_every: Option<String>,
    #[arg(long = "checkpoint-every")]
    pub checkpoint_every: Option<String>,
    #[arg(long)]
    pub patience: Option<String>,
    #[arg(long = "eval-instances")]
    pub eval_instances: Option<String>,
}

impl ConfigArgs {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        let all = [
            ("task", &self.task),
            ("maps", &self.maps),
            ("blocks", &self.blocks),
            ("flatten", &self.flatten),
            ("max-size", &self.max_size),
            ("eval-sizes", &self.eval_sizes),
            ("steps", &self.steps),
            ("batch-size", &self.batch_size),
            ("lr", &self.lr),
            ("seed", &self.seed),
            ("recurrent-steps", &self.recurrent_steps),
            ("dataset", &self.dataset),
            ("metrics-every", &self.metrics_every),
            ("checkpoint-every", &self.checkpoint_every),
            ("patience", &self.patience),
            ("eval-instances", &self.eval_instances),
        ];
        all.into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<TrainConfig, CliError> {
        let mut c = TrainConfig::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            c.apply_text(&text)?;
        }
        for (k, v) in self.overrides() {
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }
}

fn load_pool(config: &TrainConfig) -> Result<Option<Arc<SudokuPool>>, CliError> {
    if config.task != TaskId::Sudoku {
        return Ok(None);
    }
    let path = config
        .dataset
        .as_ref()
        .ok_or_else(|| CliError::Config("sudoku needs --dataset".into()))?;
    Ok(Some(Arc::new(SudokuPool(sudoku::sudoku_load(path)?))))
}

fn evaluate_config(
    config: &TrainConfig,
    params: &crate::model::ModelParams,
    sizes: &[usize],
    instances: usize,
    sudoku_set: Option<&[TaskInstance]>,
) -> Result<Vec<SizeAccuracy>, CliError> {
    let predictor = ModelPredictor {
        params,
        recurrent_steps: config.recurrent_steps,
    };
    if let Some(set) = sudoku_set {
        let take = &set[..instances.min(set.len())];
        let (per_element, per_instance) = score(&predictor, take)?;
        return Ok(vec![SizeAccuracy {
            size: sudoku::BOARD,
            per_element,
            per_instance,
            instances: take.len(),
            trained: true,
        }]);
    }
    Ok(evaluate(&predictor, config.task, sizes, instances, config.max_train_size)?)
}

/// Trains under `out` and writes `config.txt`, `metrics.jsonl`,
/// `checkpoint.ckpt` and `accuracy.md`.
pub fn train_run(
    config: &TrainConfig,
    out: &Path,
    resume: Option<&Path>,
) -> Result<(TrainOutcome, Vec<SizeAccuracy>), CliError> {
    fs::create_dir_all(out).map_err(io(out))?;
    let cfg_path = out.join("config.txt");
    fs::write(&cfg_path, config.to_text()).map_err(io(&cfg_path))?;
    let pool = load_pool(config)?;
    let resume = resume.map(load_checkpoint).transpose()?;
    if let Some(ck) = &resume {
        ck.params_for(config.task)?;
    }
    let outcome = train(
        config,
        TrainOptions {
            out_dir: Some(out.to_path_buf()),
            resume,
            until_step: None,
            sudoku_pool: pool.clone().map(|p| p as Arc<dyn crate::harness::InstancePool>),
        },
    )?;
    let rows = evaluate_config(
        config,
        &outcome.checkpoint.params,
        &config.eval_sizes,
        config.eval_instances,
        pool.as_ref().map(|p| p.0.as_slice()),
    )?;
    let table = accuracy_table(config.task, &rows);
    let acc_path = out.join("accuracy.md");
    fs::write(&acc_path, &table).map_err(io(&acc_path))?;
    Ok((outcome, rows))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(io(dir))?;
            }
            fs::write(p, text).map_err(io(p))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { run, resume } => {
            let config = run.config.resolve()?;
            let (outcome, _) = train_run(&config, &run.out, resume.as_deref())?;
            print!("{}", fs::read_to_string(run.out.join("accuracy.md")).unwrap_or_default());
            println!(
                "trained {} steps{}; outputs in {}",
                outcome.checkpoint.step,
                if outcome.stopped_early { " (early stop)" } else { "" },
                run.out.display()
            );
        }
        Command::Eval {
            checkpoint,
            sizes,
            instances,
            task,
            dataset,
            out,
        } => {
            let ck = load_checkpoint(&checkpoint)?;
            let mut config = ck.config.clone();
            if let Some(t) = task {
                config.set("task", &t)?;
            }
            if let Some(d) = dataset {
                config.dataset = Some(d);
            }
            let params = ck.params_for(config.task)?;
            let sizes = match sizes {
                Some(s) => parse_sizes("sizes", &s)?,
                None => config.eval_sizes.clone(),
            };
            if let Some(&s) = sizes.iter().find(|s| !s.is_power_of_two()) {
                return Err(CliError::Config(format!("size {s} is not a power of two")));
            }
            let pool = load_pool(&config)?;
            let rows = evaluate_config(
                &config,
                params,
                &sizes,
                instances.unwrap_or(config.eval_instances),
                pool.as_ref().map(|p| p.0.as_slice()),
            )?;
            let table = accuracy_table(config.task, &rows);
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir).map_err(io(&dir))?;
                    let p = dir.join("accuracy.md");
                    fs::write(&p, &table).map_err(io(&p))?;
                    print!("{table}");
                }
                None => print!("{table}"),
            }
        }
        Command::Bench {
            config,
            sizes,
            timed_steps,
            warmup,
            out,
        } => {
            let config = config.resolve()?;
            let sizes = parse_sizes("sizes", &sizes)?;
            if config.task == TaskId::Sudoku {
                return Err(CliError::Config("bench needs a generated task".into()));
            }
            let rows = benchmark_speed_with(&config, &sizes, warmup, timed_steps.max(1))?;
            let mut text = bench_table(&rows);
            if rows.len() >= 2 {
                let slope = |f: fn(&crate::harness::BenchRow) -> f64| {
                    loglog_slope(&rows.iter().map(|r| (r.size as f64, f(r))).collect::<Vec<_>>())
                };
                let _ = writeln!(
                    text,
                    "\nlog-log slope vs n: inference {:.2}, training {:.2}",
                    slope(|r| r.infer_ms),
                    slope(|r| r.train_ms)
                );
            }
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir).map_err(io(&dir))?;
                    let p = dir.join("bench.md");
                    fs::write(&p, &text).map_err(io(&p))?;
                    let c = dir.join("config.txt");
                    fs::write(&c, config.to_text()).map_err(io(&c))?;
                    print!("{text}");
                }
                None => print!("{text}"),
            }
        }
        Command::Gen {
            task,
            size,
            count,
            seed,
            givens,
            out,
        } => {
            let task: TaskId = task.parse()?;
            let mut text = String::new();
            for i in 0..count as u64 {
                if task == TaskId::Sudoku {
                    let (p, s) = sudoku::generate_puzzle(seed.wrapping_add(i), givens);
                    text.push_str(&sudoku::format_line(&p, &s));
                    text.push('\n');
                } else {
                    if i > 0 {
                        text.push('\n');
                    }
                    text.push_str(&task.generate(size, seed.wrapping_add(i))?.to_text());
                }
            }
            write_or_print(out.as_deref(), &text)?;
        }
        Command::Ablate { run } => {
            let base = run.config.resolve()?;
            let mut summary = String::new();
            let mut tables = Vec::new();
            for kind in [FlattenKind::Zorder, FlattenKind::Raster] {
                let mut cfg = base.clone();
                cfg.flatten_kind = kind;
                let dir = run.out.join(kind.as_str());
                let (_, rows) = train_run(&cfg, &dir, None)?;
                tables.push((kind, rows));
            }
            let _ = writeln!(summary, "| flatten | {} |", size_heads(&tables[0].1));
            let _ = writeln!(summary, "|---|{}", "---|".repeat(tables[0].1.len()));
            for (kind, rows) in &tables {
                let cells: Vec<String> = rows.iter().map(|r| format!("{:.3}", r.per_element)).collect();
                let _ = writeln!(summary, "| {} | {} |", kind.as_str(), cells.join(" | "));
            }
            summary.push_str("\nper-element accuracy; `*` trained size\n");
            let p = run.out.join("ablation.md");
            fs::write(&p, &summary).map_err(io(&p))?;
            print!("{summary}");
        }
    }
    Ok(())
}

fn size_heads(rows: &[SizeAccuracy]) -> String {
    rows.iter()
        .map(|r| format!("{0}x{0}{1}", r.size, if r.trained { "*" } else { "" }))
        .collect::<Vec<_>>()
        .join(" | ")
}

/// Parses `argv` (including the program name) and runs it; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
