//! Training, evaluation, benchmarking and checkpoint persistence.

pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod curriculum;
pub mod eval;
pub mod train;

pub use bench::{benchmark_speed, benchmark_speed_with, loglog_slope, BenchRow};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError};
pub use config::{ConfigError, TrainConfig};
pub use curriculum::{curriculum_sample, size_weights, InstancePool};
pub use eval::{accuracy_table, evaluate, ModelPredictor, OraclePredictor, Predictor, SizeAccuracy};
pub use train::{train, train_step, MetricsRecord, StepStats, SudokuPool, TrainError, TrainOptions, TrainOutcome};
