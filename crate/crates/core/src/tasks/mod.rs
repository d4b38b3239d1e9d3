//! Algorithmic tasks on matrices and graphs, plus Sudoku.
//!
//! Every generator is a pure function of `(task, n, seed)` and returns an
//! input grid padded to the next power-of-two side, the target grid, and a
//! loss mask that is 1 exactly where the target is defined.

mod graph;
mod grid;
mod matrix;
pub mod sudoku;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use graph::{
    component_labels, random_digraph, random_labeled_graph, random_triangle_graph,
    transitive_step, triangle_edges, GraphInstance, ADJ_PAD, COMPONENT_MEAN_DEGREE, LABEL_MAX,
    LABEL_MIN, LABEL_PAD, TRANSITIVITY_MEAN_DEGREE, TRIANGLE_EXTRA_EDGES_MEAN,
};
pub use grid::Grid;
pub use matrix::{
    rotate90, square_from_bits, square_mod2, xor_bits, xor_layout, xor_operand_width,
    ALPHABET_MAX, SQUARE_BIT0, XOR_BIT0, XOR_SEP,
};
pub use sudoku::{is_valid_solution, sudoku_augment, sudoku_load};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaskError {
    #[error("unknown task '{0}'")]
    UnknownTask(String),
    #[error("{task}: unsupported size {n} ({reason})")]
    BadSize { task: TaskId, n: usize, reason: String },
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("line {line}: solution violates Sudoku constraints")]
    InvalidSolution { line: usize },
    #[error("line {line}: puzzle givens disagree with the solution")]
    GivensMismatch { line: usize },
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("sudoku instances are loaded from a dataset, not generated by size")]
    NotGenerated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskId {
    Transpose,
    Rotate90,
    Xor,
    SquareMod2,
    ComponentLabeling,
    Transitivity,
    TriangleFinding,
    Sudoku,
}

impl TaskId {
    pub const ALL: [TaskId; 8] = [
        TaskId::Transpose,
        TaskId::Rotate90,
        TaskId::Xor,
        TaskId::SquareMod2,
        TaskId::ComponentLabeling,
        TaskId::Transitivity,
        TaskId::TriangleFinding,
        TaskId::Sudoku,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::Transpose => "transpose",
            TaskId::Rotate90 => "rotate90",
            TaskId::Xor => "xor",
            TaskId::SquareMod2 => "square_mod2",
            TaskId::ComponentLabeling => "component_labeling",
            TaskId::Transitivity => "transitivity",
            TaskId::TriangleFinding => "triangle_finding",
            TaskId::Sudoku => "sudoku",
        }
    }

    pub fn is_graph(self) -> bool {
        matches!(
            self,
            TaskId::ComponentLabeling | TaskId::Transitivity | TaskId::TriangleFinding
        )
    }

    /// Input symbol used outside the defined region.
    pub fn pad_symbol(self) -> u32 {
        match self {
            TaskId::Transpose | TaskId::Rotate90 | TaskId::Xor | TaskId::SquareMod2 => 0,
            TaskId::ComponentLabeling => LABEL_PAD,
            TaskId::Transitivity | TaskId::TriangleFinding => ADJ_PAD,
            TaskId::Sudoku => sudoku::PAD,
        }
    }

    pub fn vocab_in(self) -> usize {
        match self {
            TaskId::Transpose | TaskId::Rotate90 => ALPHABET_MAX as usize + 1,
            TaskId::Xor => 4,
            TaskId::SquareMod2 => 3,
            TaskId::ComponentLabeling => LABEL_MAX as usize + 1,
            TaskId::Transitivity | TaskId::TriangleFinding => 3,
            TaskId::Sudoku => 11,
        }
    }

    pub fn vocab_out(self) -> usize {
        match self {
            TaskId::Transpose | TaskId::Rotate90 => ALPHABET_MAX as usize + 1,
            TaskId::Xor | TaskId::SquareMod2 => 2,
            TaskId::ComponentLabeling => LABEL_MAX as usize + 1,
            TaskId::Transitivity | TaskId::TriangleFinding => 2,
            TaskId::Sudoku => 10,
        }
    }

    /// Generates the instance for `(self, n, seed)`. For graph tasks `n` is
    /// the vertex count; for matrix tasks it is the matrix side.
    pub fn generate(self, n: usize, seed: u64) -> Result<TaskInstance, TaskError> {
        let min = match self {
            TaskId::Xor => 4,
            TaskId::TriangleFinding => 3,
            TaskId::Sudoku => return Err(TaskError::NotGenerated),
            _ => 2,
        };
        if n < min {
            return Err(TaskError::BadSize {
                task: self,
                n,
                reason: format!("minimum is {min}"),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(match self {
            TaskId::Transpose => matrix::transpose_instance(n, seed, &mut rng),
            TaskId::Rotate90 => matrix::rotate90_instance(n, seed, &mut rng),
            TaskId::Xor => matrix::xor_instance(n, seed, &mut rng)?,
            TaskId::SquareMod2 => matrix::square_instance(n, seed, &mut rng),
            TaskId::ComponentLabeling => graph::component_instance(n, seed, &mut rng),
            TaskId::Transitivity => graph::transitivity_instance(n, seed, &mut rng),
            TaskId::TriangleFinding => graph::triangle_instance(n, seed, &mut rng),
            TaskId::Sudoku => unreachable!(),
        })
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskId {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| TaskError::UnknownTask(s.to_string()))
    }
}

pub fn gen_transpose(n: usize, seed: u64) -> TaskInstance {
    TaskId::Transpose.generate(n, seed).expect("n >= 2")
}

pub fn gen_rotate90(n: usize, seed: u64) -> TaskInstance {
    TaskId::Rotate90.generate(n, seed).expect("n >= 2")
}

pub fn gen_xor(n: usize, seed: u64) -> Result<TaskInstance, TaskError> {
    TaskId::Xor.generate(n, seed)
}

pub fn gen_square_mod2(n: usize, seed: u64) -> TaskInstance {
    TaskId::SquareMod2.generate(n, seed).expect("n >= 2")
}

pub fn gen_component_labeling(v: usize, seed: u64) -> TaskInstance {
    TaskId::ComponentLabeling.generate(v, seed).expect("v >= 2")
}

pub fn gen_transitivity(v: usize, seed: u64) -> TaskInstance {
    TaskId::Transitivity.generate(v, seed).expect("v >= 2")
}

pub fn gen_triangle_finding(v: usize, seed: u64) -> Result<TaskInstance, TaskError> {
    TaskId::TriangleFinding.generate(v, seed)
}

/// An `(input, target, mask)` triple over a padded square grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskInstance {
    pub task: TaskId,
    /// Logical size: matrix side, vertex count, or 9 for Sudoku.
    pub n: usize,
    pub seed: u64,
    pub input: Grid,
    pub target: Grid,
    pub mask: Vec<u8>,
}

impl TaskInstance {
    pub fn side(&self) -> usize {
        self.input.side()
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m != 0).count()
    }

    /// Cells of `prediction` matching the target under the mask.
    pub fn correct_count(&self, prediction: &[u32]) -> usize {
        self.mask
            .iter()
            .zip(prediction)
            .zip(self.target.cells())
            .filter(|((&m, p), t)| m != 0 && p == t)
            .count()
    }

    /// Whitespace-separated text form: header `task n seed`, then the input,
    /// target, and mask grids, one row per line.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.task, self.n, self.seed);
        let side = self.side();
        let push_rows = |out: &mut String, cells: &[u32]| {
            for row in cells.chunks(side) {
                let line: Vec<String> = row.iter().map(u32::to_string).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        };
        push_rows(&mut out, self.input.cells());
        push_rows(&mut out, self.target.cells());
        let mask: Vec<u32> = self.mask.iter().map(|&m| m as u32).collect();
        push_rows(&mut out, &mask);
        out
    }

    /// Parses one instance written by [`TaskInstance::to_text`].
    pub fn from_text(text: &str) -> Result<Self, TaskError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty()).enumerate();
        let (_, header) = lines.next().ok_or(TaskError::Format {
            line: 1,
            reason: "empty instance".into(),
        })?;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 3 {
            return Err(TaskError::Format {
                line: 1,
                reason: "header must be 'task n seed'".into(),
            });
        }
        let task: TaskId = head[0].parse()?;
        let num = |s: &str, line| {
            s.parse::<u64>().map_err(|_| TaskError::Format {
                line,
                reason: format!("not an integer: {s:?}"),
            })
        };
        let n = num(head[1], 1)? as usize;
        let seed = num(head[2], 1)?;
        let mut rows: Vec<Vec<u32>> = Vec::new();
        for (i, line) in lines {
            let row = line
                .split_whitespace()
                .map(|t| num(t, i + 1).map(|v| v as u32))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        let side = rows.first().map_or(0, |r| r.len());
        if side == 0 || rows.len() != 3 * side || rows.iter().any(|r| r.len() != side) {
            return Err(TaskError::Format {
                line: 2,
                reason: format!("expected 3 square grids, got {} rows of width {side}", rows.len()),
            });
        }
        let input = Grid::from_rows(&rows[..side]);
        let target = Grid::from_rows(&rows[side..2 * side]);
        let mask = rows[2 * side..].concat().into_iter().map(|v| v as u8).collect();
        Ok(TaskInstance {
            task,
            n,
            seed,
            input,
            target,
            mask,
        })
    }
}
