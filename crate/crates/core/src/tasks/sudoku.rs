//! Sudoku ingestion, validation, augmentation, and a small puzzle generator.
//!
//! Dataset lines are `puzzle,solution`, each an 81-digit string with `0`
//! for blanks. Boards are placed in the top-left corner of a 16x16 grid.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Grid, TaskError, TaskId, TaskInstance};

pub const BOARD: usize = 9;
pub const CELLS: usize = BOARD * BOARD;
/// Side of the padded grid fed to the network.
pub const PADDED_SIDE: usize = 16;
/// Input symbol outside the 9x9 board.
pub const PAD: u32 = 10;

pub type Board = [u8; CELLS];

fn box_of(r: usize, c: usize) -> usize {
    (r / 3) * 3 + c / 3
}

/// True iff every row, column, and 3x3 box holds 1..=9 exactly once.
pub fn is_valid_solution(board: &Board) -> bool {
    let mut rows = [0u16; BOARD];
    let mut cols = [0u16; BOARD];
    let mut boxes = [0u16; BOARD];
    for r in 0..BOARD {
        for c in 0..BOARD {
            let d = board[r * BOARD + c];
            if !(1..=9).contains(&d) {
                return false;
            }
            let bit = 1u16 << d;
            if rows[r] & bit != 0 || cols[c] & bit != 0 || boxes[box_of(r, c)] & bit != 0 {
                return false;
            }
            rows[r] |= bit;
            cols[c] |= bit;
            boxes[box_of(r, c)] |= bit;
        }
    }
    true
}

fn parse_board(s: &str, line: usize) -> Result<Board, TaskError> {
    if s.len() != CELLS {
        return Err(TaskError::Format {
            line,
            reason: format!("expected {CELLS} digits, got {}", s.len()),
        });
    }
    let mut out = [0u8; CELLS];
    for (i, ch) in s.chars().enumerate() {
        out[i] = ch.to_digit(10).ok_or_else(|| TaskError::Format {
            line,
            reason: format!("non-digit character {ch:?} at column {}", i + 1),
        })? as u8;
    }
    Ok(out)
}

/// Parses one `puzzle,solution` line.
pub fn parse_line(text: &str, line: usize) -> Result<(Board, Board), TaskError> {
    let text = text.trim_end_matches(['\r', '\n']);
    if text.len() != 2 * CELLS + 1 {
        return Err(TaskError::Format {
            line,
            reason: format!("expected {} characters, got {}", 2 * CELLS + 1, text.len()),
        });
    }
    let (p, s) = text.split_once(',').ok_or_else(|| TaskError::Format {
        line,
        reason: "missing ',' separator".into(),
    })?;
    let puzzle = parse_board(p, line)?;
    let solution = parse_board(s, line)?;
    if !is_valid_solution(&solution) {
        return Err(TaskError::InvalidSolution { line });
    }
    if puzzle
        .iter()
        .zip(&solution)
        .any(|(&g, &s)| g != 0 && g != s)
    {
        return Err(TaskError::GivensMismatch { line });
    }
    Ok((puzzle, solution))
}

/// Builds a padded training instance from a board pair.
pub fn instance_from_boards(puzzle: &Board, solution: &Board, seed: u64) -> TaskInstance {
    let mut input = Grid::filled(PADDED_SIDE, PAD);
    let mut target = Grid::filled(PADDED_SIDE, 0);
    let mut mask = vec![0u8; PADDED_SIDE * PADDED_SIDE];
    for r in 0..BOARD {
        for c in 0..BOARD {
            input.set(r, c, puzzle[r * BOARD + c] as u32);
            target.set(r, c, solution[r * BOARD + c] as u32);
            mask[r * PADDED_SIDE + c] = 1;
        }
    }
    TaskInstance {
        task: TaskId::Sudoku,
        n: BOARD,
        seed,
        input,
        target,
        mask,
    }
}

/// Reads the 9x9 region of a padded grid.
pub fn board_of(grid: &Grid) -> Board {
    let mut out = [0u8; CELLS];
    for r in 0..BOARD {
        for c in 0..BOARD {
            out[r * BOARD + c] = grid.get(r, c) as u8;
        }
    }
    out
}

/// Loads a `puzzle,solution` file. A non-numeric first line is taken as a
/// header and skipped.
pub fn sudoku_load(path: impl AsRef<Path>) -> Result<Vec<TaskInstance>, TaskError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| TaskError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_dataset(&text)
}

pub fn parse_dataset(text: &str) -> Result<Vec<TaskInstance>, TaskError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 && !line.starts_with(|c: char| c.is_ascii_digit()) {
            continue;
        }
        let (p, s) = parse_line(line, i + 1)?;
        out.push(instance_from_boards(&p, &s, i as u64));
    }
    Ok(out)
}

/// Validity-preserving board transformation: optional transpose, then a
/// permutation of the three row stacks and of the three column bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Augmentation {
    pub transpose: bool,
    pub stacks: [usize; 3],
    pub bands: [usize; 3],
}

impl Augmentation {
    pub const IDENTITY: Augmentation = Augmentation {
        transpose: false,
        stacks: [0, 1, 2],
        bands: [0, 1, 2],
    };

    pub fn random(rng: &mut impl Rng) -> Self {
        let mut stacks = [0, 1, 2];
        let mut bands = [0, 1, 2];
        stacks.shuffle(rng);
        bands.shuffle(rng);
        Self {
            transpose: rng.gen_bool(0.5),
            stacks,
            bands,
        }
    }

    /// Output cell `(r, c)` is read from the returned source cell.
    fn source(&self, r: usize, c: usize) -> (usize, usize) {
        let r = self.stacks[r / 3] * 3 + r % 3;
        let c = self.bands[c / 3] * 3 + c % 3;
        if self.transpose {
            (c, r)
        } else {
            (r, c)
        }
    }

    pub fn apply_board(&self, b: &Board) -> Board {
        let mut out = [0u8; CELLS];
        for r in 0..BOARD {
            for c in 0..BOARD {
                let (sr, sc) = self.source(r, c);
                out[r * BOARD + c] = b[sr * BOARD + sc];
            }
        }
        out
    }
}

/// Applies a random [`Augmentation`] to puzzle and solution alike.
pub fn sudoku_augment(inst: &TaskInstance, seed: u64) -> TaskInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    augment_with(inst, &Augmentation::random(&mut rng))
}

pub fn augment_with(inst: &TaskInstance, aug: &Augmentation) -> TaskInstance {
    let p = aug.apply_board(&board_of(&inst.input));
    let s = aug.apply_board(&board_of(&inst.target));
    instance_from_boards(&p, &s, inst.seed)
}

fn candidates(board: &Board, idx: usize) -> u16 {
    let (r, c) = (idx / BOARD, idx % BOARD);
    let mut used = 0u16;
    for i in 0..BOARD {
        used |= 1 << board[r * BOARD + i];
        used |= 1 << board[i * BOARD + c];
    }
    let (br, bc) = (r / 3 * 3, c / 3 * 3);
    for i in 0..3 {
        for j in 0..3 {
            used |= 1 << board[(br + i) * BOARD + bc + j];
        }
    }
    !used & 0b11_1111_1110
}

/// Counts solutions up to `limit` by backtracking on the most constrained cell.
pub fn count_solutions(board: &mut Board, limit: usize) -> usize {
    let mut best: Option<(usize, u16)> = None;
    for idx in 0..CELLS {
        if board[idx] == 0 {
            let cand = candidates(board, idx);
            if best.is_none_or(|(_, b)| cand.count_ones() < b.count_ones()) {
                best = Some((idx, cand));
                if cand.count_ones() <= 1 {
                    break;
                }
            }
        }
    }
    let Some((idx, cand)) = best else {
        return 1;
    };
    let mut found = 0;
    for d in 1..=9u8 {
        if cand & (1 << d) != 0 {
            board[idx] = d;
            found += count_solutions(board, limit - found);
            board[idx] = 0;
            if found >= limit {
                break;
            }
        }
    }
    found
}

fn fill(board: &mut Board, rng: &mut ChaCha8Rng) -> bool {
    let Some(idx) = board.iter().position(|&d| d == 0) else {
        return true;
    };
    let cand = candidates(board, idx);
    let mut digits: Vec<u8> = (1..=9).filter(|d| cand & (1 << d) != 0).collect();
    digits.shuffle(rng);
    for d in digits {
        board[idx] = d;
        if fill(board, rng) {
            return true;
        }
    }
    board[idx] = 0;
    false
}

/// Random uniquely solvable puzzle with at most `givens` clues (more if
/// removing further clues would break uniqueness).
pub fn generate_puzzle(seed: u64, givens: usize) -> (Board, Board) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut solution = [0u8; CELLS];
    let filled = fill(&mut solution, &mut rng);
    debug_assert!(filled);
    let mut puzzle = solution;
    let mut order: Vec<usize> = (0..CELLS).collect();
    order.shuffle(&mut rng);
    let mut remaining = CELLS;
    for idx in order {
        if remaining <= givens {
            break;
        }
        let keep = puzzle[idx];
        puzzle[idx] = 0;
        let mut probe = puzzle;
        if count_solutions(&mut probe, 2) == 1 {
            remaining -= 1;
        } else {
            puzzle[idx] = keep;
        }
    }
    (puzzle, solution)
}

/// `puzzle,solution` line for a board pair.
pub fn format_line(puzzle: &Board, solution: &Board) -> String {
    let digits = |b: &Board| b.iter().map(|d| char::from(b'0' + d)).collect::<String>();
    format!("{},{}", digits(puzzle), digits(solution))
}
