//! Flat `key=value` run configuration.
//!
//! File keys are the long flag names of the command line, so every flag has
//! a file equivalent. Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::autodiff::DEFAULT_LEARNING_RATE;
use crate::perm::FlattenKind;
use crate::tasks::TaskId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("bad value for '{key}': {reason}")]
    BadValue { key: String, reason: String },
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub task: TaskId,
    /// Feature maps per sequence position.
    pub m: usize,
    /// Number of Beneš blocks.
    pub blocks: usize,
    pub flatten_kind: FlattenKind,
    pub max_train_size: usize,
    pub eval_sizes: Vec<usize>,
    pub steps: u64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Recurrent applications of the block stack; Sudoku only.
    pub recurrent_steps: usize,
    /// Sudoku CSV file.
    pub dataset: Option<PathBuf>,
    pub metrics_every: u64,
    pub checkpoint_every: u64,
    /// Early-stopping patience in steps on the moving-average loss; 0 disables.
    pub patience: u64,
    pub eval_instances: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            task: TaskId::Transpose,
            m: 48,
            blocks: 2,
            flatten_kind: FlattenKind::Zorder,
            max_train_size: 16,
            eval_sizes: vec![4, 8, 16, 32],
            steps: 30_000,
            batch_size: 32,
            learning_rate: DEFAULT_LEARNING_RATE,
            seed: 1,
            recurrent_steps: 1,
            dataset: None,
            metrics_every: 100,
            checkpoint_every: 10_000,
            patience: 0,
            eval_instances: 64,
        }
    }
}

pub const KEYS: [&str; 16] = [
    "task",
    "maps",
    "blocks",
    "flatten",
    "max-size",
    "eval-sizes",
    "steps",
    "batch-size",
    "lr",
    "seed",
    "recurrent-steps",
    "dataset",
    "metrics-every",
    "checkpoint-every",
    "patience",
    "eval-instances",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        reason: e.to_string(),
    })
}

pub fn parse_sizes(key: &str, value: &str) -> Result<Vec<usize>, ConfigError> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "task" => {
                self.task = value.trim().parse().map_err(|e: crate::tasks::TaskError| {
                    ConfigError::BadValue {
                        key: key.into(),
                        reason: e.to_string(),
                    }
                })?
            }
            "maps" => self.m = parse(key, value)?,
            "blocks" => self.blocks = parse(key, value)?,
            "flatten" => self.flatten_kind = parse(key, value)?,
            "max-size" => self.max_train_size = parse(key, value)?,
            "eval-sizes" => self.eval_sizes = parse_sizes(key, value)?,
            "steps" => self.steps = parse(key, value)?,
            "batch-size" => self.batch_size = parse(key, value)?,
            "lr" => self.learning_rate = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "recurrent-steps" => self.recurrent_steps = parse(key, value)?,
            "dataset" => {
                let v = value.trim();
                self.dataset = (!v.is_empty()).then(|| PathBuf::from(v));
            }
            "metrics-every" => self.metrics_every = parse(key, value)?,
            "checkpoint-every" => self.checkpoint_every = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "eval-instances" => self.eval_instances = parse(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies every `key=value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.m == 0 || self.blocks == 0 {
            return bad("maps and blocks must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch-size must be >= 1".into());
        }
        if self.recurrent_steps == 0 {
            return bad("recurrent-steps must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.learning_rate));
        }
        if self.metrics_every == 0 || self.checkpoint_every == 0 {
            return bad("metrics-every and checkpoint-every must be >= 1".into());
        }
        if self.task == TaskId::Sudoku {
            if self.dataset.is_none() {
                return bad("sudoku needs a dataset".into());
            }
            return Ok(());
        }
        if self.max_train_size < 4 || !self.max_train_size.is_power_of_two() {
            return bad(format!(
                "max-size must be a power of two >= 4, got {}",
                self.max_train_size
            ));
        }
        if let Some(&s) = self.eval_sizes.iter().find(|s| !s.is_power_of_two() || **s < 2) {
            return bad(format!("eval size {s} is not a power of two >= 2"));
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_text(&self) -> String {
        let sizes: Vec<String> = self.eval_sizes.iter().map(usize::to_string).collect();
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        kv("task", self.task.to_string());
        kv("maps", self.m.to_string());
        kv("blocks", self.blocks.to_string());
        kv("flatten", self.flatten_kind.as_str().to_string());
        kv("max-size", self.max_train_size.to_string());
        kv("eval-sizes", sizes.join(","));
        kv("steps", self.steps.to_string());
        kv("batch-size", self.batch_size.to_string());
        kv("lr", format!("{:?}", self.learning_rate));
        kv("seed", self.seed.to_string());
        kv("recurrent-steps", self.recurrent_steps.to_string());
        kv(
            "dataset",
            self.dataset
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        kv("metrics-every", self.metrics_every.to_string());
        kv("checkpoint-every", self.checkpoint_every.to_string());
        kv("patience", self.patience.to_string());
        kv("eval-instances", self.eval_instances.to_string());
        s
    }

    /// Sizes of the training curriculum, smallest first.
    pub fn train_sizes(&self) -> Vec<usize> {
        if self.task == TaskId::Sudoku {
            return vec![crate::tasks::sudoku::BOARD];
        }
        std::iter::successors(Some(4usize), |s| Some(s * 2))
            .take_while(|&s| s <= self.max_train_size)
            .collect()
    }
}
