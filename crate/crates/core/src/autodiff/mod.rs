//! Dense arrays with a reverse-mode tape, covering only the operations the
//! network needs, plus the RAdam optimizer.

mod array;
mod radam;
mod scalar;
mod tape;

pub use array::Array;
pub use radam::{
    radam_step, RAdamState, StepOutcome, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON,
    DEFAULT_LEARNING_RATE,
};
pub use scalar::Scalar;
pub use tape::{gelu_scalar, Gradients, Tape, Var, RMSNORM_EPS};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch ({detail})")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("invalid shape {0:?}: extents must be positive")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} needs {} elements, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: index {index} out of range for extent {bound}")]
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("loss mask selects no positions")]
    EmptyMask,
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}
