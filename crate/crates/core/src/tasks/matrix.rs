//! Matrix tasks: transpose, clockwise rotation, XOR of two side-by-side
//! binary matrices, and binary matrix squaring mod 2.

#![allow(clippy::needless_range_loop)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Grid, TaskError, TaskId, TaskInstance};

/// Symbol alphabet of the permutation tasks, `1..=11`; 0 pads.
pub const ALPHABET_MAX: u32 = 11;
pub const PAD: u32 = 0;
/// XOR input symbols: `PAD`, separator, then bit `b` as `2 + b`.
pub const XOR_SEP: u32 = 1;
pub const XOR_BIT0: u32 = 2;
/// Squaring input symbols: `PAD`, then bit `b` as `1 + b`.
pub const SQUARE_BIT0: u32 = 1;

fn random_symbols(rng: &mut ChaCha8Rng, n: usize) -> Grid {
    let cells = (0..n * n).map(|_| rng.gen_range(1..=ALPHABET_MAX)).collect();
    Grid::from_cells(n, cells)
}

fn random_bits(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<u8>> {
    (0..rows)
        .map(|_| (0..cols).map(|_| rng.gen_range(0..=1u8)).collect())
        .collect()
}

fn finish(task: TaskId, n: usize, seed: u64, input: Grid, target: Grid, mask: Vec<u8>) -> TaskInstance {
    let side = input.side();
    let padded = 1usize << crate::perm::k_for_side(side);
    let mut full_mask = vec![0u8; padded * padded];
    for r in 0..side {
        for c in 0..side {
            full_mask[r * padded + c] = mask[r * side + c];
        }
    }
    TaskInstance {
        task,
        n,
        seed,
        input: input.padded_to(padded, task.pad_symbol()),
        target: target.padded_to(padded, 0),
        mask: full_mask,
    }
}

pub(super) fn transpose_instance(n: usize, seed: u64, rng: &mut ChaCha8Rng) -> TaskInstance {
    let input = random_symbols(rng, n);
    let target = input.transposed();
    finish(TaskId::Transpose, n, seed, input, target, vec![1; n * n])
}

/// Clockwise quarter turn.
pub fn rotate90(g: &Grid) -> Grid {
    g.transposed().flipped_horizontally()
}

pub(super) fn rotate90_instance(n: usize, seed: u64, rng: &mut ChaCha8Rng) -> TaskInstance {
    let input = random_symbols(rng, n);
    let target = rotate90(&input);
    finish(TaskId::Rotate90, n, seed, input, target, vec![1; n * n])
}

/// Width of each operand of the XOR task on an `n`-wide grid.
pub fn xor_operand_width(n: usize) -> usize {
    n / 2 - 1
}

/// Elementwise XOR of equally shaped bit matrices.
pub fn xor_bits(a: &[Vec<u8>], b: &[Vec<u8>]) -> Vec<Vec<u8>> {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x ^ y).collect())
        .collect()
}

/// Lays out `a | SEP | b | PAD...` on an `n x n` grid.
///
/// Operand `a` sits in columns `[0, w)`, the separator column is `w`, and
/// `b` fills `[w + 1, 2w + 1)`, so `b[i][j]` is exactly `n/2` columns right
/// of `a[i][j]`.
pub fn xor_layout(n: usize, a: &[Vec<u8>], b: &[Vec<u8>]) -> Result<TaskInstance, TaskError> {
    if n < 4 {
        return Err(TaskError::BadSize {
            task: TaskId::Xor,
            n,
            reason: "needs a grid of side >= 4".into(),
        });
    }
    let w = xor_operand_width(n);
    let rows_ok = a.len() == n && b.len() == n;
    if !rows_ok || a.iter().chain(b).any(|r| r.len() != w) {
        return Err(TaskError::BadSize {
            task: TaskId::Xor,
            n,
            reason: format!("operands must be {n}x{w}"),
        });
    }
    let mut input = Grid::filled(n, PAD);
    let mut target = Grid::filled(n, 0);
    let mut mask = vec![0u8; n * n];
    let out = xor_bits(a, b);
    for r in 0..n {
        input.set(r, w, XOR_SEP);
        for c in 0..w {
            input.set(r, c, XOR_BIT0 + a[r][c] as u32);
            input.set(r, w + 1 + c, XOR_BIT0 + b[r][c] as u32);
            target.set(r, c, out[r][c] as u32);
            mask[r * n + c] = 1;
        }
    }
    Ok(finish(TaskId::Xor, n, 0, input, target, mask))
}

pub(super) fn xor_instance(n: usize, seed: u64, rng: &mut ChaCha8Rng) -> Result<TaskInstance, TaskError> {
    let w = xor_operand_width(n.max(4));
    let a = random_bits(rng, n, w);
    let b = random_bits(rng, n, w);
    let mut inst = xor_layout(n, &a, &b)?;
    inst.seed = seed;
    Ok(inst)
}

/// `(a @ a) mod 2`, row by row: row `i` of the product is the XOR of the
/// rows `k` with `a[i][k] = 1`.
pub fn square_mod2(a: &[Vec<u8>]) -> Vec<Vec<u8>> {
    let n = a.len();
    let mut out = vec![vec![0u8; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] == 1 {
                for (o, &v) in out[i].iter_mut().zip(&a[k]) {
                    *o ^= v;
                }
            }
        }
    }
    out
}

pub(super) fn square_instance(n: usize, seed: u64, rng: &mut ChaCha8Rng) -> TaskInstance {
    let a = random_bits(rng, n, n);
    square_from_bits(n, seed, &a)
}

pub fn square_from_bits(n: usize, seed: u64, a: &[Vec<u8>]) -> TaskInstance {
    let sq = square_mod2(a);
    let input = Grid::from_rows(
        &a.iter()
            .map(|r| r.iter().map(|&b| SQUARE_BIT0 + b as u32).collect())
            .collect::<Vec<_>>(),
    );
    let target = Grid::from_rows(
        &sq.iter()
            .map(|r| r.iter().map(|&b| b as u32).collect())
            .collect::<Vec<_>>(),
    );
    finish(TaskId::SquareMod2, n, seed, input, target, vec![1; n * n])
}
