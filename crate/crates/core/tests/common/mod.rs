//! Reference implementations shared by the integration and acceptance tests.
//!
//! Everything here is written straight from the task and permutation
//! definitions, without calling the generator or table code it checks.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{HashSet, VecDeque};

use matrix_se::autodiff::{Array, AutodiffError, Tape, Var};
use matrix_se::gradcheck::{check_gradients, GradCheckReport};
use matrix_se::model::{
    matrix_se_forward, BoundBlock, BoundParams, BoundQsu, GridBatch, LayerCounter, ModelParams,
};
use matrix_se::perm::{FlattenKind, PermTable};
use matrix_se::tasks::{TaskId, TaskInstance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- oracles

fn region(inst: &TaskInstance, n: usize) -> Vec<Vec<u32>> {
    (0..n)
        .map(|r| (0..n).map(|c| inst.input.get(r, c)).collect())
        .collect()
}

/// Expected `(target, mask)` over the padded grid, rebuilt from the input.
pub fn oracle(inst: &TaskInstance) -> (Vec<u32>, Vec<u8>) {
    let side = inst.side();
    let n = inst.n;
    let mut target = vec![0u32; side * side];
    let mut mask = vec![0u8; side * side];
    let a = region(inst, n);
    let mut put = |r: usize, c: usize, v: u32| {
        target[r * side + c] = v;
        mask[r * side + c] = 1;
    };
    match inst.task {
        TaskId::Transpose => {
            for i in 0..n {
                for j in 0..n {
                    put(i, j, a[j][i]);
                }
            }
        }
        TaskId::Rotate90 => {
            for i in 0..n {
                for j in 0..n {
                    put(i, j, a[n - 1 - j][i]);
                }
            }
        }
        TaskId::Xor => {
            // locate the separator column, then read both operands off it
            let sep = (0..n).find(|&c| a[0][c] == 1).expect("separator column");
            for i in 0..n {
                for j in 0..sep {
                    let x = a[i][j] - 2;
                    let y = a[i][sep + 1 + j] - 2;
                    put(i, j, x ^ y);
                }
            }
        }
        TaskId::SquareMod2 => {
            let b: Vec<Vec<u32>> = a.iter().map(|r| r.iter().map(|&s| s - 1).collect()).collect();
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0;
                    for k in 0..n {
                        acc += b[i][k] * b[k][j];
                    }
                    put(i, j, acc % 2);
                }
            }
        }
        TaskId::ComponentLabeling => {
            let edge = |i: usize, j: usize| a[i][j] >= 2;
            let mut comp = vec![usize::MAX; n];
            for s in 0..n {
                if comp[s] != usize::MAX {
                    continue;
                }
                comp[s] = s;
                let mut q = VecDeque::from([s]);
                while let Some(u) = q.pop_front() {
                    for w in 0..n {
                        if edge(u, w) && comp[w] == usize::MAX {
                            comp[w] = s;
                            q.push_back(w);
                        }
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    let label = if edge(i, j) {
                        let mut best = u32::MAX;
                        for x in 0..n {
                            for y in 0..n {
                                if edge(x, y) && comp[x] == comp[i] {
                                    best = best.min(a[x][y]);
                                }
                            }
                        }
                        best
                    } else {
                        0
                    };
                    put(i, j, label);
                }
            }
        }
        TaskId::Transitivity => {
            for i in 0..n {
                for j in 0..n {
                    let mut v = a[i][j];
                    for k in 0..n {
                        if a[i][k] == 1 && a[k][j] == 1 {
                            v = 1;
                        }
                    }
                    put(i, j, v);
                }
            }
        }
        TaskId::TriangleFinding => {
            let mut marked = HashSet::new();
            for x in 0..n {
                for y in x + 1..n {
                    for z in y + 1..n {
                        if a[x][y] == 1 && a[y][z] == 1 && a[x][z] == 1 {
                            for (p, q) in [(x, y), (y, z), (x, z)] {
                                marked.insert((p, q));
                                marked.insert((q, p));
                            }
                        }
                    }
                }
            }
            for i in 0..n {
                for j in 0..n {
                    put(i, j, u32::from(marked.contains(&(i, j))));
                }
            }
        }
        TaskId::Sudoku => unreachable!("sudoku has its own validator"),
    }
    (target, mask)
}

/// Row, column and box uniqueness of a solved 9x9 board given as cells.
pub fn sudoku_valid(cells: &[u32]) -> bool {
    let at = |r: usize, c: usize| cells[r * 9 + c];
    let ok = |vals: Vec<u32>| {
        let set: HashSet<u32> = vals.iter().copied().collect();
        set.len() == 9 && set.iter().all(|v| (1..=9).contains(v))
    };
    (0..9).all(|r| ok((0..9).map(|c| at(r, c)).collect()))
        && (0..9).all(|c| ok((0..9).map(|r| at(r, c)).collect()))
        && (0..9).all(|b| ok((0..9).map(|i| at(3 * (b / 3) + i / 3, 3 * (b % 3) + i % 3)).collect()))
}

/// Top-left 9x9 cells of a padded Sudoku grid.
pub fn board_cells(grid: &[u32], side: usize) -> Vec<u32> {
    (0..81).map(|i| grid[(i / 9) * side + i % 9]).collect()
}

// ---------------------------------------------------------- permutations

pub fn is_bijection(t: &PermTable) -> bool {
    let mut seen = vec![false; t.len()];
    for &x in t.indices().iter() {
        if x >= seen.len() || seen[x] {
            return false;
        }
        seen[x] = true;
    }
    true
}

/// Z-order by recursive quadrant descent, no bit tricks.
pub fn quadtree_order(side: usize) -> Vec<(usize, usize)> {
    fn rec(r: usize, c: usize, s: usize, out: &mut Vec<(usize, usize)>) {
        if s == 1 {
            out.push((r, c));
            return;
        }
        let h = s / 2;
        rec(r, c, h, out);
        rec(r, c + h, h, out);
        rec(r + h, c, h, out);
        rec(r + h, c + h, h, out);
    }
    let mut out = Vec::with_capacity(side * side);
    rec(0, 0, side, &mut out);
    out
}

/// Interleaves the top and bottom halves of the rows, then of the columns.
pub fn interleave_rows_then_cols(grid: &[u32], side: usize) -> Vec<u32> {
    let h = side / 2;
    let order: Vec<usize> = (0..h).flat_map(|i| [i, h + i]).collect();
    let mut rows = vec![0; side * side];
    for (dst, &src) in order.iter().enumerate() {
        rows[dst * side..(dst + 1) * side].copy_from_slice(&grid[src * side..(src + 1) * side]);
    }
    let mut out = vec![0; side * side];
    for r in 0..side {
        for (dst, &src) in order.iter().enumerate() {
            out[r * side + dst] = rows[r * side + src];
        }
    }
    out
}

// ------------------------------------------------------------- gradients

fn random_array(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Array<f64> {
    let n = shape.iter().product();
    Array::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

/// `sum(out * r)` for a fixed random `r`, so every output coordinate matters.
fn project(t: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var, AutodiffError> {
    let shape = t.value(out).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = t.constant(random_array(&mut rng, &shape, 1.0));
    let prod = t.mul(out, r)?;
    Ok(t.sum(prod))
}

/// Finite-difference reports for every tape operation.
pub fn operation_gradient_reports() -> Vec<(&'static str, GradCheckReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random_array(&mut rng, &[3, 5], 1.5);
    let x2 = random_array(&mut rng, &[3, 5], 1.5);
    let w = random_array(&mut rng, &[5, 4], 0.8);
    let b = random_array(&mut rng, &[4], 0.5);
    let gain = random_array(&mut rng, &[5], 1.0);
    let vlast = random_array(&mut rng, &[5], 1.0);
    let s = random_array(&mut rng, &[1], 1.0);
    let table = random_array(&mut rng, &[6, 3], 1.0);
    let seq = random_array(&mut rng, &[2, 16, 3], 1.0);
    let logits = random_array(&mut rng, &[6, 4], 2.0);
    let perm: std::sync::Arc<[usize]> = {
        let mut p: Vec<usize> = (0..16).collect();
        p.reverse();
        p.swap(2, 9);
        p.into()
    };

    type Case = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var, AutodiffError>>;
    let cases: Vec<(&'static str, Vec<Array<f64>>, Case)> = vec![
        ("linear", vec![x.clone(), w.clone(), b.clone()], Box::new(|t, v| {
            let y = t.linear(v[0], v[1], Some(v[2]))?;
            project(t, y, 1)
        })),
        ("linear_no_bias", vec![x.clone(), w.clone()], Box::new(|t, v| {
            let y = t.linear(v[0], v[1], None)?;
            project(t, y, 2)
        })),
        ("gelu", vec![x.clone()], Box::new(|t, v| {
            let y = t.gelu(v[0]);
            project(t, y, 3)
        })),
        ("sigmoid", vec![x.clone()], Box::new(|t, v| {
            let y = t.sigmoid(v[0]);
            project(t, y, 4)
        })),
        ("rmsnorm", vec![x.clone(), gain.clone()], Box::new(|t, v| {
            let y = t.rmsnorm(v[0], v[1])?;
            project(t, y, 5)
        })),
        ("add", vec![x.clone(), x2.clone()], Box::new(|t, v| {
            let y = t.add(v[0], v[1])?;
            project(t, y, 6)
        })),
        ("mul", vec![x.clone(), x2.clone()], Box::new(|t, v| {
            let y = t.mul(v[0], v[1])?;
            project(t, y, 7)
        })),
        ("mul_last", vec![x.clone(), vlast.clone()], Box::new(|t, v| {
            let y = t.mul_last(v[0], v[1])?;
            project(t, y, 8)
        })),
        ("mul_scalar", vec![x.clone(), s.clone()], Box::new(|t, v| {
            let y = t.mul_scalar(v[0], v[1])?;
            project(t, y, 9)
        })),
        ("scale", vec![x.clone()], Box::new(|t, v| {
            let y = t.scale(v[0], -0.7);
            project(t, y, 10)
        })),
        ("sum", vec![x.clone()], Box::new(|t, v| {
            let y = t.gelu(v[0]);
            Ok(t.sum(y))
        })),
        ("reshape", vec![x.clone()], Box::new(|t, v| {
            let y = t.reshape(v[0], vec![5, 3])?;
            project(t, y, 11)
        })),
        ("permute_select", vec![random_array(&mut ChaCha8Rng::seed_from_u64(3), &[16, 2], 1.0)], {
            let perm = perm.clone();
            Box::new(move |t, v| {
                let y = t.permute_select(v[0], &perm)?;
                project(t, y, 12)
            })
        }),
        ("permute_axis", vec![seq.clone()], {
            let perm = perm.clone();
            Box::new(move |t, v| {
                let y = t.permute_axis(v[0], 1, &perm)?;
                project(t, y, 13)
            })
        }),
        ("embed", vec![table.clone()], Box::new(|t, v| {
            let y = t.embed(v[0], &[0, 5, 2, 2, 1])?;
            project(t, y, 14)
        })),
        ("softmax_xent_loss", vec![logits.clone()], Box::new(|t, v| {
            t.softmax_xent_loss(v[0], &[0, 3, 1, 2, 2, 0], &[1, 1, 0, 1, 1, 1])
        })),
    ];
    cases
        .into_iter()
        .map(|(name, inputs, f)| (name, check_gradients(&inputs, 1, |t, v| f(t, v)).unwrap()))
        .collect()
}

/// Rebuilds tape handles of `p` from variables listed in `named_tensors` order.
pub fn bound_from_vars(p: &ModelParams<f64>, vars: &[Var]) -> BoundParams {
    let mut it = vars.iter().copied();
    let mut next = || it.next().expect("enough vars");
    let embedding = next();
    let mut qsu = || BoundQsu {
        z: next(),
        rms_gain: next(),
        w: next(),
        b: next(),
        s: next(),
        h: next(),
    };
    let blocks = (0..p.num_blocks())
        .map(|_| BoundBlock {
            forward_shared: qsu(),
            mirror_shared: qsu(),
            final_layer: qsu(),
        })
        .collect();
    BoundParams {
        m: p.m,
        vocab_in: p.vocab_in,
        flatten_kind: p.flatten_kind,
        embedding,
        blocks,
        head_hidden_w: next(),
        head_hidden_b: next(),
        head_out_w: next(),
        head_out_b: next(),
    }
}

/// Finite-difference check of the full model loss on one 4x4 transpose batch.
pub fn full_model_gradient_report(m: usize, blocks: usize, seed: u64) -> GradCheckReport {
    let p = matrix_se::model::init_params(m, blocks, 12, 12, seed).cast::<f64>();
    let insts: Vec<TaskInstance> = (0..2).map(|i| TaskId::Transpose.generate(4, seed + i).unwrap()).collect();
    let inputs: Vec<&[u32]> = insts.iter().map(|i| i.input.cells()).collect();
    let batch = GridBatch::new(4, &inputs).unwrap();
    let labels: Vec<usize> = insts
        .iter()
        .flat_map(|i| i.target.cells().iter().map(|&t| t as usize))
        .collect();
    let mask: Vec<u8> = insts.iter().flat_map(|i| i.mask.clone()).collect();
    let arrays: Vec<Array<f64>> = p.named_tensors().into_iter().map(|(_, a)| a.clone()).collect();
    check_gradients(&arrays, 1, |t, v| {
        let bound = bound_from_vars(&p, v);
        let mut counter = LayerCounter::default();
        let logits = matrix_se_forward(t, &bound, &batch, &mut counter).map_err(|e| match e {
            matrix_se::model::ModelError::Autodiff(a) => a,
            other => panic!("{other}"),
        })?;
        t.softmax_xent_loss(logits, &labels, &mask)
    })
    .unwrap()
}

pub fn flatten_kinds() -> [FlattenKind; 2] {
    [FlattenKind::Zorder, FlattenKind::Raster]
}

// ---------------------------------------------------------- receptive field

/// L1 norm, per input position, of the gradient of logit `(pos, class)` with
/// respect to the embedded input.
pub fn input_sensitivity(p: &ModelParams<f64>, grid: &[u32], side: usize, pos: usize, class: usize) -> Vec<f64> {
    let m = p.m;
    let e: Vec<f64> = grid
        .iter()
        .flat_map(|&s| p.embedding.data()[s as usize * m..(s as usize + 1) * m].to_vec())
        .collect();
    let mut tape = Tape::<f64>::new();
    let bound = p.bind_frozen(&mut tape);
    let ev = tape.param(&Array::new(vec![1, side * side, m], e).unwrap());
    let mut counter = LayerCounter::default();
    let k = side.trailing_zeros();
    let logits = matrix_se::model::forward_from_embedded(&mut tape, &bound, ev, k, &mut counter).unwrap();
    let mut pick = Array::zeros(tape.value(logits).shape());
    pick.data_mut()[pos * p.vocab_out + class] = 1.0;
    let pick = tape.constant(pick);
    let sel = tape.mul(logits, pick).unwrap();
    let out = tape.sum(sel);
    let grads = tape.backward(out).unwrap();
    grads
        .get(ev)
        .unwrap()
        .data()
        .chunks(m)
        .map(|c| c.iter().map(|v| v.abs()).sum())
        .collect()
}

/// Random grid of `side * side` symbols below `vocab`.
pub fn random_grid(side: usize, vocab: usize, seed: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..side * side).map(|_| rng.gen_range(0..vocab as u32)).collect()
}
