use crate::perm::k_for_side;

/// Square grid of symbols, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Grid {
    side: usize,
    cells: Vec<u32>,
}

impl Grid {
    pub fn filled(side: usize, value: u32) -> Self {
        Self {
            side,
            cells: vec![value; side * side],
        }
    }

    pub fn from_rows(rows: &[Vec<u32>]) -> Self {
        let side = rows.len();
        assert!(rows.iter().all(|r| r.len() == side), "grid must be square");
        Self {
            side,
            cells: rows.concat(),
        }
    }

    pub fn from_cells(side: usize, cells: Vec<u32>) -> Self {
        assert_eq!(cells.len(), side * side, "cell count must be side^2");
        Self { side, cells }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn cells(&self) -> &[u32] {
        &self.cells
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u32 {
        self.cells[r * self.side + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u32) {
        self.cells[r * self.side + c] = v;
    }

    pub fn rows(&self) -> Vec<Vec<u32>> {
        self.cells.chunks(self.side).map(|r| r.to_vec()).collect()
    }

    /// Copies this grid into the top-left corner of a `2^k` square filled
    /// with `pad`, for the smallest `2^k >= side`.
    pub fn padded(&self, pad: u32) -> Grid {
        let side = 1usize << k_for_side(self.side);
        self.padded_to(side, pad)
    }

    pub fn padded_to(&self, side: usize, pad: u32) -> Grid {
        assert!(side >= self.side);
        let mut out = Grid::filled(side, pad);
        for r in 0..self.side {
            for c in 0..self.side {
                out.set(r, c, self.get(r, c));
            }
        }
        out
    }

    pub fn transposed(&self) -> Grid {
        let n = self.side;
        let mut out = Grid::filled(n, 0);
        for r in 0..n {
            for c in 0..n {
                out.set(r, c, self.get(c, r));
            }
        }
        out
    }

    /// Reverses the order of columns in each row.
    pub fn flipped_horizontally(&self) -> Grid {
        let n = self.side;
        let mut out = Grid::filled(n, 0);
        for r in 0..n {
            for c in 0..n {
                out.set(r, c, self.get(r, n - 1 - c));
            }
        }
        out
    }

    pub fn max_symbol(&self) -> u32 {
        self.cells.iter().copied().max().unwrap_or(0)
    }
}
