//! Index permutations used by the network: Z-order and raster
//! flatten/unflatten, and the quaternary digit-rotation shuffles.
//!
//! Z-order interleaves coordinate bits with the row bit in the more
//! significant slot of every base-4 digit, so the quad `(0,0) (0,1) (1,0)
//! (1,1)` is visited in that order at every level of the quadtree.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

/// Largest supported `k` (sequence length `4^k`).
pub const MAX_K: u32 = 15;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PermError {
    #[error("coordinate ({row}, {col}) outside a {side}x{side} grid")]
    OutOfRange { row: usize, col: usize, side: usize },
    #[error("index {x} outside [0, 4^{k})")]
    IndexOutOfRange { x: usize, k: u32 },
    #[error("k must be in 1..={MAX_K}, got {0}")]
    BadK(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PermKind {
    ZorderFlatten,
    ZorderUnflatten,
    RasterFlatten,
    RasterUnflatten,
    QshuffleRight,
    QshuffleLeft,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Right,
    Left,
}

/// How a grid is read into a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlattenKind {
    Zorder,
    Raster,
}

impl FlattenKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FlattenKind::Zorder => "zorder",
            FlattenKind::Raster => "raster",
        }
    }

    pub fn flatten(self) -> PermKind {
        match self {
            FlattenKind::Zorder => PermKind::ZorderFlatten,
            FlattenKind::Raster => PermKind::RasterFlatten,
        }
    }

    pub fn unflatten(self) -> PermKind {
        match self {
            FlattenKind::Zorder => PermKind::ZorderUnflatten,
            FlattenKind::Raster => PermKind::RasterUnflatten,
        }
    }
}

impl std::str::FromStr for FlattenKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zorder" => Ok(FlattenKind::Zorder),
            "raster" => Ok(FlattenKind::Raster),
            other => Err(format!("unknown flatten kind '{other}' (zorder|raster)")),
        }
    }
}

/// A bijection on `[0, 4^k)`, applied as `out[j] = in[table[j]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermTable {
    pub k: u32,
    pub kind: PermKind,
    table: Arc<[usize]>,
}

impl PermTable {
    pub fn indices(&self) -> &Arc<[usize]> {
        &self.table
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn apply<T: Clone>(&self, xs: &[T]) -> Vec<T> {
        self.table.iter().map(|&i| xs[i].clone()).collect()
    }
}

fn check_k(k: u32) -> Result<(), PermError> {
    if k == 0 || k > MAX_K {
        return Err(PermError::BadK(k));
    }
    Ok(())
}

/// Morton index of `(row, col)` in a `2^k x 2^k` grid.
pub fn zorder_index(row: usize, col: usize, k: u32) -> Result<usize, PermError> {
    let side = 1usize << k;
    if row >= side || col >= side {
        return Err(PermError::OutOfRange { row, col, side });
    }
    let mut z = 0usize;
    for bit in 0..k {
        let r = (row >> bit) & 1;
        let c = (col >> bit) & 1;
        z |= ((r << 1) | c) << (2 * bit);
    }
    Ok(z)
}

/// Inverse of [`zorder_index`].
pub fn zorder_coords(z: usize, k: u32) -> (usize, usize) {
    let (mut row, mut col) = (0, 0);
    for bit in 0..k {
        let digit = (z >> (2 * bit)) & 3;
        row |= (digit >> 1) << bit;
        col |= (digit & 1) << bit;
    }
    (row, col)
}

/// Rotates the `k` base-4 digits of `x` by one position.
///
/// Right rotation moves the least significant digit to the top.
pub fn qrotate(x: usize, k: u32, direction: Direction) -> usize {
    debug_assert!(x < 1usize << (2 * k));
    if k <= 1 {
        return x;
    }
    let top = 2 * (k - 1);
    match direction {
        Direction::Right => (x >> 2) | ((x & 3) << top),
        Direction::Left => ((x << 2) & ((1usize << (2 * k)) - 1)) | (x >> top),
    }
}

pub fn build_flatten_table(k: u32, kind: FlattenKind, unflatten: bool) -> Result<PermTable, PermError> {
    check_k(k)?;
    let side = 1usize << k;
    let n = side * side;
    let table: Vec<usize> = match (kind, unflatten) {
        (FlattenKind::Raster, _) => (0..n).collect(),
        // sequence[t] = grid[rowmajor(zorder^-1(t))]
        (FlattenKind::Zorder, false) => (0..n)
            .map(|t| {
                let (r, c) = zorder_coords(t, k);
                r * side + c
            })
            .collect(),
        // grid[p] = sequence[zorder(p)]
        (FlattenKind::Zorder, true) => (0..n)
            .map(|p| zorder_index(p / side, p % side, k).expect("in range"))
            .collect(),
    };
    let kind = if unflatten { kind.unflatten() } else { kind.flatten() };
    Ok(PermTable {
        k,
        kind,
        table: table.into(),
    })
}

pub fn build_qshuffle_table(k: u32, direction: Direction) -> Result<PermTable, PermError> {
    check_k(k)?;
    let n = 1usize << (2 * k);
    let table: Vec<usize> = (0..n).map(|x| qrotate(x, k, direction)).collect();
    Ok(PermTable {
        k,
        kind: match direction {
            Direction::Right => PermKind::QshuffleRight,
            Direction::Left => PermKind::QshuffleLeft,
        },
        table: table.into(),
    })
}

type TableCache = HashMap<(u32, PermKind), Arc<PermTable>>;

/// Builds (once) and returns the table of `kind` for `k`.
pub fn cached_table(k: u32, kind: PermKind) -> Result<Arc<PermTable>, PermError> {
    static CACHE: OnceLock<Mutex<TableCache>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(t) = cache.lock().unwrap().get(&(k, kind)) {
        return Ok(Arc::clone(t));
    }
    let table = match kind {
        PermKind::ZorderFlatten => build_flatten_table(k, FlattenKind::Zorder, false)?,
        PermKind::ZorderUnflatten => build_flatten_table(k, FlattenKind::Zorder, true)?,
        PermKind::RasterFlatten => build_flatten_table(k, FlattenKind::Raster, false)?,
        PermKind::RasterUnflatten => build_flatten_table(k, FlattenKind::Raster, true)?,
        PermKind::QshuffleRight => build_qshuffle_table(k, Direction::Right)?,
        PermKind::QshuffleLeft => build_qshuffle_table(k, Direction::Left)?,
    };
    let table = Arc::new(table);
    cache
        .lock()
        .unwrap()
        .insert((k, kind), Arc::clone(&table));
    Ok(table)
}

/// Smallest `k >= 1` with `2^k >= side`.
pub fn k_for_side(side: usize) -> u32 {
    let mut k = 1;
    while (1usize << k) < side {
        k += 1;
    }
    k
}

/// Checked variant of [`qrotate`].
pub fn qrotate_checked(x: usize, k: u32, direction: Direction) -> Result<usize, PermError> {
    check_k(k)?;
    if x >= 1usize << (2 * k) {
        return Err(PermError::IndexOutOfRange { x, k });
    }
    Ok(qrotate(x, k, direction))
}
