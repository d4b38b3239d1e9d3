//! Graph tasks on adjacency matrices: connected-component labeling,
//! length-2 transitivity, and triangle finding.

#![allow(clippy::needless_range_loop)]

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::{Grid, TaskId, TaskInstance};

/// Edge labels of the component-labeling task are drawn from this range.
pub const LABEL_MIN: u32 = 2;
pub const LABEL_MAX: u32 = 100;
/// Input symbol for cells outside the `v x v` adjacency matrix.
pub const LABEL_PAD: u32 = 1;
/// Pad symbol of the 0/1 adjacency tasks.
pub const ADJ_PAD: u32 = 2;

/// Expected vertex degree of component-labeling graphs.
pub const COMPONENT_MEAN_DEGREE: f64 = 1.5;
/// Expected out-degree of transitivity digraphs.
pub const TRANSITIVITY_MEAN_DEGREE: f64 = 1.5;
/// Mean of the Poisson-distributed count of extra edges in triangle graphs.
pub const TRIANGLE_EXTRA_EDGES_MEAN: f64 = 3.0;

/// Adjacency or label matrix of a graph on `v` vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphInstance {
    pub v: usize,
    pub matrix: Vec<Vec<u32>>,
}

impl GraphInstance {
    pub fn is_symmetric(&self) -> bool {
        (0..self.v).all(|i| (0..self.v).all(|j| self.matrix[i][j] == self.matrix[j][i]))
    }

    pub fn edge_count(&self) -> usize {
        self.matrix.iter().flatten().filter(|&&x| x != 0).count()
    }
}

fn edge_probability(mean_degree: f64, v: usize) -> f64 {
    (mean_degree / (v.max(2) - 1) as f64).min(1.0)
}

fn finish(task: TaskId, seed: u64, input: &GraphInstance, target: Vec<Vec<u32>>) -> TaskInstance {
    let v = input.v;
    let input_grid = Grid::from_rows(&input.matrix);
    let target_grid = Grid::from_rows(&target);
    let padded_side = 1usize << crate::perm::k_for_side(v);
    let mut mask = vec![0u8; padded_side * padded_side];
    for r in 0..v {
        for c in 0..v {
            mask[r * padded_side + c] = 1;
        }
    }
    TaskInstance {
        task,
        n: v,
        seed,
        input: input_grid.padded_to(padded_side, task.pad_symbol()),
        target: target_grid.padded_to(padded_side, 0),
        mask,
    }
}

/// Random undirected graph with edge labels in `LABEL_MIN..=LABEL_MAX`.
pub fn random_labeled_graph(v: usize, rng: &mut ChaCha8Rng) -> GraphInstance {
    let p = edge_probability(COMPONENT_MEAN_DEGREE, v);
    let mut matrix = vec![vec![0u32; v]; v];
    for i in 0..v {
        for j in i + 1..v {
            if rng.gen_bool(p) {
                let label = rng.gen_range(LABEL_MIN..=LABEL_MAX);
                matrix[i][j] = label;
                matrix[j][i] = label;
            }
        }
    }
    GraphInstance { v, matrix }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra] = rb;
        }
    }
}

/// Every edge gets the smallest label among the edges of its component.
pub fn component_labels(g: &GraphInstance) -> Vec<Vec<u32>> {
    let v = g.v;
    let mut uf = UnionFind::new(v);
    for i in 0..v {
        for j in 0..v {
            if g.matrix[i][j] != 0 {
                uf.union(i, j);
            }
        }
    }
    let mut best = vec![u32::MAX; v];
    for i in 0..v {
        for j in 0..v {
            let l = g.matrix[i][j];
            if l != 0 {
                let r = uf.find(i);
                best[r] = best[r].min(l);
            }
        }
    }
    let mut out = vec![vec![0u32; v]; v];
    for i in 0..v {
        for j in 0..v {
            if g.matrix[i][j] != 0 {
                out[i][j] = best[uf.find(i)];
            }
        }
    }
    out
}

pub(super) fn component_instance(v: usize, seed: u64, rng: &mut ChaCha8Rng) -> TaskInstance {
    let g = random_labeled_graph(v, rng);
    let target = component_labels(&g);
    finish(TaskId::ComponentLabeling, seed, &g, target)
}

pub fn random_digraph(v: usize, rng: &mut ChaCha8Rng) -> GraphInstance {
    let p = edge_probability(TRANSITIVITY_MEAN_DEGREE, v);
    let mut matrix = vec![vec![0u32; v]; v];
    for (i, row) in matrix.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            if i != j && rng.gen_bool(p) {
                *cell = 1;
            }
        }
    }
    GraphInstance { v, matrix }
}

/// `A | sign(A^2)` on a 0/1 adjacency matrix, via row bitsets.
pub fn transitive_step(g: &GraphInstance) -> Vec<Vec<u32>> {
    let v = g.v;
    let rows: Vec<Vec<bool>> = g
        .matrix
        .iter()
        .map(|r| r.iter().map(|&x| x != 0).collect())
        .collect();
    let mut out = rows.clone();
    for i in 0..v {
        for k in 0..v {
            if rows[i][k] {
                for (o, &reach) in out[i].iter_mut().zip(&rows[k]) {
                    *o |= reach;
                }
            }
        }
    }
    out.into_iter()
        .map(|r| r.into_iter().map(u32::from).collect())
        .collect()
}

pub(super) fn transitivity_instance(v: usize, seed: u64, rng: &mut ChaCha8Rng) -> TaskInstance {
    let g = random_digraph(v, rng);
    let target = transitive_step(&g);
    finish(TaskId::Transitivity, seed, &g, target)
}

/// Complete bipartite graph on a random split (sizes `v/2` and the rest)
/// plus a Poisson-distributed number of extra random edges.
pub fn random_triangle_graph(v: usize, rng: &mut ChaCha8Rng) -> GraphInstance {
    let mut order: Vec<usize> = (0..v).collect();
    order.shuffle(rng);
    let mut side = vec![false; v];
    for &x in &order[..v / 2] {
        side[x] = true;
    }
    let mut matrix = vec![vec![0u32; v]; v];
    for i in 0..v {
        for j in 0..v {
            if side[i] != side[j] {
                matrix[i][j] = 1;
            }
        }
    }
    let extra = Poisson::new(TRIANGLE_EXTRA_EDGES_MEAN)
        .expect("positive mean")
        .sample(rng) as usize;
    let mut free: Vec<(usize, usize)> = (0..v)
        .flat_map(|i| (i + 1..v).map(move |j| (i, j)))
        .filter(|&(i, j)| matrix[i][j] == 0)
        .collect();
    free.shuffle(rng);
    for &(i, j) in free.iter().take(extra) {
        matrix[i][j] = 1;
        matrix[j][i] = 1;
    }
    GraphInstance { v, matrix }
}

/// Marks every edge that has a common neighbour with its endpoints.
pub fn triangle_edges(g: &GraphInstance) -> Vec<Vec<u32>> {
    let v = g.v;
    let adj: Vec<Vec<bool>> = g
        .matrix
        .iter()
        .map(|r| r.iter().map(|&x| x != 0).collect())
        .collect();
    let mut out = vec![vec![0u32; v]; v];
    for i in 0..v {
        for j in 0..v {
            if i != j && adj[i][j] && adj[i].iter().zip(&adj[j]).enumerate().any(|(k, (&a, &b))| {
                k != i && k != j && a && b
            }) {
                out[i][j] = 1;
            }
        }
    }
    out
}

pub(super) fn triangle_instance(v: usize, seed: u64, rng: &mut ChaCha8Rng) -> TaskInstance {
    let g = random_triangle_graph(v, rng);
    let target = triangle_edges(&g);
    finish(TaskId::TriangleFinding, seed, &g, target)
}
