use std::sync::Arc;

use super::{Array, AutodiffError, Scalar};

/// Fixed epsilon inside the RMSNorm square root.
pub const RMSNORM_EPS: f64 = 1e-6;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T: Scalar> {
    Leaf,
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Gelu {
        x: Var,
    },
    RmsNorm {
        x: Var,
        gain: Var,
        inv_rms: Vec<T>,
    },
    Sigmoid {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    MulLast {
        x: Var,
        v: Var,
    },
    MulScalar {
        x: Var,
        s: Var,
    },
    Scale {
        x: Var,
        c: T,
    },
    Permute {
        x: Var,
        outer: usize,
        inner: usize,
        table: Arc<[usize]>,
    },
    Reshape {
        x: Var,
    },
    Embed {
        table: Var,
        ids: Vec<usize>,
    },
    Sum {
        x: Var,
    },
    SoftmaxXent {
        logits: Var,
        probs: Vec<T>,
        labels: Vec<usize>,
        mask: Vec<T>,
        count: T,
    },
}

struct Node<T: Scalar> {
    value: Array<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Records array operations for reverse-mode differentiation.
///
/// A tape is built fresh for every forward pass. Parameters enter as
/// leaves via [`Tape::param`]; after [`Tape::backward`] their gradients are
/// read back from the returned [`Gradients`].
pub struct Tape<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients<T: Scalar> {
    grads: Vec<Option<Array<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Array<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Array<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn mismatch(op: &'static str, detail: String) -> AutodiffError {
    AutodiffError::ShapeMismatch { op, detail }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    }
}

#[inline]
fn std_normal_cdf<T: Scalar>(x: T) -> T {
    T::from_f64(0.5) * (T::ONE + (x * T::from_f64(std::f64::consts::FRAC_1_SQRT_2)).erf())
}

/// Exact-erf GELU, `x * Phi(x)`.
#[inline]
pub fn gelu_scalar<T: Scalar>(x: T) -> T {
    x * std_normal_cdf(x)
}

#[inline]
fn gelu_grad<T: Scalar>(x: T) -> T {
    let pdf = (T::from_f64(-0.5) * x * x).exp() * T::from_f64(0.398_942_280_401_432_7);
    std_normal_cdf(x) + x * pdf
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Array<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records `a` as a leaf; it receives a gradient iff `a.requires_grad`.
    pub fn leaf(&mut self, a: Array<T>) -> Var {
        let g = a.requires_grad;
        self.push(a, Op::Leaf, g)
    }

    pub fn param(&mut self, a: &Array<T>) -> Var {
        self.leaf(a.clone().with_grad())
    }

    pub fn constant(&mut self, mut a: Array<T>) -> Var {
        a.requires_grad = false;
        self.leaf(a)
    }

    pub fn value(&self, v: Var) -> &Array<T> {
        &self.nodes[v.0].value
    }

    /// Affine map over the trailing dimension: `out_j = sum_i x_i * w[i][j] + b_j`.
    ///
    /// `weight` is stored `[d_in, d_out]`.
    pub fn linear(&mut self, x: Var, weight: Var, bias: Option<Var>) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        let wv = self.value(weight);
        if wv.shape().len() != 2 || xv.last_dim() != wv.shape()[0] {
            return Err(mismatch(
                "linear",
                format!("input {:?} against weight {:?}", xv.shape(), wv.shape()),
            ));
        }
        let (d_in, d_out) = (wv.shape()[0], wv.shape()[1]);
        if let Some(b) = bias {
            let bv = self.value(b);
            if bv.len() != d_out {
                return Err(mismatch(
                    "linear",
                    format!("bias {:?} for output width {d_out}", bv.shape()),
                ));
            }
        }
        let rows = xv.len() / d_in;
        let mut out = match bias {
            Some(b) => {
                let bv = self.value(b).data();
                let mut o = Vec::with_capacity(rows * d_out);
                for _ in 0..rows {
                    o.extend_from_slice(bv);
                }
                o
            }
            None => vec![T::ZERO; rows * d_out],
        };
        unsafe {
            T::gemm(
                rows,
                d_in,
                d_out,
                T::ONE,
                xv.data().as_ptr(),
                d_in as isize,
                1,
                wv.data().as_ptr(),
                d_out as isize,
                1,
                T::ONE,
                out.as_mut_ptr(),
                d_out as isize,
                1,
            );
        }
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().unwrap() = d_out;
        let needs = self.needs(x) || self.needs(weight) || bias.is_some_and(|b| self.needs(b));
        let value = Array::new(shape, out)?;
        Ok(self.push(value, Op::Linear { x, w: weight, b: bias }, needs))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| gelu_scalar(v)).collect();
        let value = Array::new(xv.shape().to_vec(), data).unwrap();
        let needs = self.needs(x);
        self.push(value, Op::Gelu { x }, needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| sigmoid(v)).collect();
        let value = Array::new(xv.shape().to_vec(), data).unwrap();
        let needs = self.needs(x);
        self.push(value, Op::Sigmoid { x }, needs)
    }

    /// `y_i = gain_i * x_i / sqrt(mean_j(x_j^2) + eps)` over the trailing dimension.
    pub fn rmsnorm(&mut self, x: Var, gain: Var) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        let gv = self.value(gain);
        let d = xv.last_dim();
        if gv.len() != d {
            return Err(mismatch(
                "rmsnorm",
                format!("gain {:?} for trailing extent {d}", gv.shape()),
            ));
        }
        let eps = T::from_f64(RMSNORM_EPS);
        let inv_d = T::ONE / T::from_f64(d as f64);
        let rows = xv.len() / d;
        let mut inv_rms = Vec::with_capacity(rows);
        let mut out = Vec::with_capacity(xv.len());
        let g = gv.data();
        for row in xv.data().chunks_exact(d) {
            let ms: T = row.iter().map(|&v| v * v).sum::<T>() * inv_d;
            let r = T::ONE / (ms + eps).sqrt();
            inv_rms.push(r);
            out.extend(row.iter().zip(g).map(|(&v, &gi)| gi * v * r));
        }
        let value = Array::new(xv.shape().to_vec(), out)?;
        let needs = self.needs(x) || self.needs(gain);
        Ok(self.push(value, Op::RmsNorm { x, gain, inv_rms }, needs))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(mismatch(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("add", a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(&p, &q)| p + q).collect();
        let value = Array::new(av.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add { a, b }, needs))
    }

    /// Elementwise product of equally shaped arrays.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("mul", a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let data = av.data().iter().zip(bv.data()).map(|(&p, &q)| p * q).collect();
        let value = Array::new(av.shape().to_vec(), data)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Mul { a, b }, needs))
    }

    /// Multiplies every trailing-dimension row of `x` by the vector `v`.
    pub fn mul_last(&mut self, x: Var, v: Var) -> Result<Var, AutodiffError> {
        let (xv, vv) = (self.value(x), self.value(v));
        let d = xv.last_dim();
        if vv.len() != d {
            return Err(mismatch(
                "mul_last",
                format!("vector {:?} for trailing extent {d}", vv.shape()),
            ));
        }
        let mut out = Vec::with_capacity(xv.len());
        for row in xv.data().chunks_exact(d) {
            out.extend(row.iter().zip(vv.data()).map(|(&p, &q)| p * q));
        }
        let value = Array::new(xv.shape().to_vec(), out)?;
        let needs = self.needs(x) || self.needs(v);
        Ok(self.push(value, Op::MulLast { x, v }, needs))
    }

    /// Multiplies `x` by the single element of `s`.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var, AutodiffError> {
        let sv = self.value(s);
        if !sv.is_scalar() {
            return Err(mismatch("mul_scalar", format!("scale {:?}", sv.shape())));
        }
        let c = sv.item();
        let xv = self.value(x);
        let data = xv.data().iter().map(|&p| p * c).collect();
        let value = Array::new(xv.shape().to_vec(), data)?;
        let needs = self.needs(x) || self.needs(s);
        Ok(self.push(value, Op::MulScalar { x, s }, needs))
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&p| p * c).collect();
        let value = Array::new(xv.shape().to_vec(), data).unwrap();
        let needs = self.needs(x);
        self.push(value, Op::Scale { x, c }, needs)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().copied().sum();
        let needs = self.needs(x);
        self.push(Array::scalar(total), Op::Sum { x }, needs)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, AutodiffError> {
        let value = self.value(x).clone().reshaped(shape)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Reshape { x }, needs))
    }

    /// `out[j] = x[table[j]]` along the leading axis.
    pub fn permute_select(&mut self, x: Var, table: &Arc<[usize]>) -> Result<Var, AutodiffError> {
        self.permute_axis(x, 0, table)
    }

    /// `out[.., j, ..] = x[.., table[j], ..]` along `axis`.
    pub fn permute_axis(
        &mut self,
        x: Var,
        axis: usize,
        table: &Arc<[usize]>,
    ) -> Result<Var, AutodiffError> {
        let xv = self.value(x);
        let shape = xv.shape();
        if axis >= shape.len() || shape[axis] != table.len() {
            return Err(mismatch(
                "permute_select",
                format!("table of length {} on axis {axis} of {shape:?}", table.len()),
            ));
        }
        let n = shape[axis];
        if let Some(&bad) = table.iter().find(|&&t| t >= n) {
            return Err(AutodiffError::IndexOutOfRange {
                op: "permute_select",
                index: bad,
                bound: n,
            });
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let src = xv.data();
        let mut out = Vec::with_capacity(src.len());
        for o in 0..outer {
            let base = o * n * inner;
            for &t in table.iter() {
                let s = base + t * inner;
                out.extend_from_slice(&src[s..s + inner]);
            }
        }
        let value = Array::new(shape.to_vec(), out)?;
        let needs = self.needs(x);
        Ok(self.push(
            value,
            Op::Permute {
                x,
                outer,
                inner,
                table: Arc::clone(table),
            },
            needs,
        ))
    }

    /// Row lookup `out[r] = table[ids[r]]`, producing `[ids.len(), width]`.
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Result<Var, AutodiffError> {
        let tv = self.value(table);
        if tv.shape().len() != 2 {
            return Err(mismatch("embed", format!("table {:?}", tv.shape())));
        }
        let (vocab, width) = (tv.shape()[0], tv.shape()[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= vocab) {
            return Err(AutodiffError::IndexOutOfRange {
                op: "embed",
                index: bad,
                bound: vocab,
            });
        }
        let mut out = Vec::with_capacity(ids.len() * width);
        for &i in ids {
            out.extend_from_slice(&tv.data()[i * width..(i + 1) * width]);
        }
        let value = Array::new(vec![ids.len(), width], out)?;
        let needs = self.needs(table);
        Ok(self.push(
            value,
            Op::Embed {
                table,
                ids: ids.to_vec(),
            },
            needs,
        ))
    }

    /// Mean over positions with `mask != 0` of `-log softmax(logits)[label]`.
    pub fn softmax_xent_loss(
        &mut self,
        logits: Var,
        labels: &[usize],
        mask: &[u8],
    ) -> Result<Var, AutodiffError> {
        let lv = self.value(logits);
        let classes = lv.last_dim();
        let rows = lv.len() / classes;
        if labels.len() != rows || mask.len() != rows {
            return Err(mismatch(
                "softmax_xent_loss",
                format!(
                    "{rows} logit rows, {} labels, {} mask entries",
                    labels.len(),
                    mask.len()
                ),
            ));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(AutodiffError::IndexOutOfRange {
                op: "softmax_xent_loss",
                index: bad,
                bound: classes,
            });
        }
        let active = mask.iter().filter(|&&m| m != 0).count();
        if active == 0 {
            return Err(AutodiffError::EmptyMask);
        }
        let count = T::from_f64(active as f64);
        let mut probs = Vec::with_capacity(lv.len());
        let mut total = T::ZERO;
        for (r, row) in lv.data().chunks_exact(classes).enumerate() {
            let max = row
                .iter()
                .copied()
                .fold(row[0], |a, b| if b > a { b } else { a });
            let z: T = row.iter().map(|&v| (v - max).exp()).sum();
            let log_z = z.ln();
            if mask[r] != 0 {
                total += log_z - (row[labels[r]] - max);
            }
            let inv_z = T::ONE / z;
            probs.extend(row.iter().map(|&v| (v - max).exp() * inv_z));
        }
        let loss = total / count;
        let needs = self.needs(logits);
        Ok(self.push(
            Array::scalar(loss),
            Op::SoftmaxXent {
                logits,
                probs,
                labels: labels.to_vec(),
                mask: mask
                    .iter()
                    .map(|&m| if m != 0 { T::ONE } else { T::ZERO })
                    .collect(),
                count,
            },
            needs,
        ))
    }

    /// Reverse-mode accumulation from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, AutodiffError> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(AutodiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Array<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array::new(lv.shape().to_vec(), vec![T::ONE])?);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(node, gy, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn grad_buf<'g>(&self, grads: &'g mut [Option<Array<T>>], v: Var) -> &'g mut [T] {
        let slot = &mut grads[v.0];
        if slot.is_none() {
            *slot = Some(Array::zeros(self.value(v).shape()));
        }
        slot.as_mut().unwrap().data_mut()
    }

    fn backprop_node(&self, node: &Node<T>, gy: Array<T>, grads: &mut [Option<Array<T>>]) {
        let dy = gy.data();
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let (d_in, d_out) = (wv.shape()[0], wv.shape()[1]);
                let rows = xv.len() / d_in;
                if self.needs(*x) {
                    let dx = self.grad_buf(grads, *x);
                    unsafe {
                        T::gemm(
                            rows,
                            d_out,
                            d_in,
                            T::ONE,
                            dy.as_ptr(),
                            d_out as isize,
                            1,
                            wv.data().as_ptr(),
                            1,
                            d_out as isize,
                            T::ONE,
                            dx.as_mut_ptr(),
                            d_in as isize,
                            1,
                        );
                    }
                }
                if self.needs(*w) {
                    let dw = self.grad_buf(grads, *w);
                    unsafe {
                        T::gemm(
                            d_in,
                            rows,
                            d_out,
                            T::ONE,
                            xv.data().as_ptr(),
                            1,
                            d_in as isize,
                            dy.as_ptr(),
                            d_out as isize,
                            1,
                            T::ONE,
                            dw.as_mut_ptr(),
                            d_out as isize,
                            1,
                        );
                    }
                }
                if let Some(b) = b {
                    if self.needs(*b) {
                        let db = self.grad_buf(grads, *b);
                        for row in dy.chunks_exact(d_out) {
                            for (acc, &g) in db.iter_mut().zip(row) {
                                *acc += g;
                            }
                        }
                    }
                }
            }
            Op::Gelu { x } => {
                let xv = self.value(*x).data();
                let dx = self.grad_buf(grads, *x);
                for ((acc, &g), &v) in dx.iter_mut().zip(dy).zip(xv) {
                    *acc += g * gelu_grad(v);
                }
            }
            Op::Sigmoid { x } => {
                let y = node.value.data();
                let dx = self.grad_buf(grads, *x);
                for ((acc, &g), &s) in dx.iter_mut().zip(dy).zip(y) {
                    *acc += g * s * (T::ONE - s);
                }
            }
            Op::RmsNorm { x, gain, inv_rms } => {
                let xv = self.value(*x).data();
                let gv = self.value(*gain).data();
                let d = gv.len();
                let inv_d = T::ONE / T::from_f64(d as f64);
                if self.needs(*x) {
                    let dx = self.grad_buf(grads, *x);
                    for (r, ((xr, gr), dxr)) in xv
                        .chunks_exact(d)
                        .zip(dy.chunks_exact(d))
                        .zip(dx.chunks_exact_mut(d))
                        .enumerate()
                    {
                        let rr = inv_rms[r];
                        let dot: T = xr
                            .iter()
                            .zip(gr)
                            .zip(gv)
                            .map(|((&xi, &gi), &wi)| xi * gi * wi)
                            .sum();
                        let k = rr * rr * rr * dot * inv_d;
                        for (i, acc) in dxr.iter_mut().enumerate() {
                            *acc += rr * gv[i] * gr[i] - k * xr[i];
                        }
                    }
                }
                if self.needs(*gain) {
                    let dg = self.grad_buf(grads, *gain);
                    for (r, (xr, gr)) in xv.chunks_exact(d).zip(dy.chunks_exact(d)).enumerate() {
                        let rr = inv_rms[r];
                        for ((acc, &xi), &gi) in dg.iter_mut().zip(xr).zip(gr) {
                            *acc += gi * xi * rr;
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if self.needs(v) {
                        let d = self.grad_buf(grads, v);
                        for (acc, &g) in d.iter_mut().zip(dy) {
                            *acc += g;
                        }
                    }
                }
            }
            Op::Mul { a, b } => {
                for (v, other) in [(*a, *b), (*b, *a)] {
                    if self.needs(v) {
                        let o = self.value(other).data();
                        let d = self.grad_buf(grads, v);
                        for ((acc, &g), &q) in d.iter_mut().zip(dy).zip(o) {
                            *acc += g * q;
                        }
                    }
                }
            }
            Op::MulLast { x, v } => {
                let xv = self.value(*x).data();
                let vv = self.value(*v).data();
                let d = vv.len();
                if self.needs(*x) {
                    let dx = self.grad_buf(grads, *x);
                    for (dxr, gr) in dx.chunks_exact_mut(d).zip(dy.chunks_exact(d)) {
                        for ((acc, &g), &q) in dxr.iter_mut().zip(gr).zip(vv) {
                            *acc += g * q;
                        }
                    }
                }
                if self.needs(*v) {
                    let dv = self.grad_buf(grads, *v);
                    for (xr, gr) in xv.chunks_exact(d).zip(dy.chunks_exact(d)) {
                        for ((acc, &g), &p) in dv.iter_mut().zip(gr).zip(xr) {
                            *acc += g * p;
                        }
                    }
                }
            }
            Op::MulScalar { x, s } => {
                let c = self.value(*s).item();
                if self.needs(*x) {
                    let dx = self.grad_buf(grads, *x);
                    for (acc, &g) in dx.iter_mut().zip(dy) {
                        *acc += g * c;
                    }
                }
                if self.needs(*s) {
                    let xv = self.value(*x).data();
                    let total: T = dy.iter().zip(xv).map(|(&g, &p)| g * p).sum();
                    self.grad_buf(grads, *s)[0] += total;
                }
            }
            Op::Scale { x, c } => {
                let dx = self.grad_buf(grads, *x);
                for (acc, &g) in dx.iter_mut().zip(dy) {
                    *acc += g * *c;
                }
            }
            Op::Sum { x } => {
                let g = dy[0];
                for acc in self.grad_buf(grads, *x).iter_mut() {
                    *acc += g;
                }
            }
            Op::Reshape { x } => {
                let dx = self.grad_buf(grads, *x);
                for (acc, &g) in dx.iter_mut().zip(dy) {
                    *acc += g;
                }
            }
            Op::Permute {
                x,
                outer,
                inner,
                table,
            } => {
                let n = table.len();
                let inner = *inner;
                let dx = self.grad_buf(grads, *x);
                for o in 0..*outer {
                    let base = o * n * inner;
                    for (j, &t) in table.iter().enumerate() {
                        let src = &dy[base + j * inner..base + (j + 1) * inner];
                        let dst = &mut dx[base + t * inner..base + (t + 1) * inner];
                        for (acc, &g) in dst.iter_mut().zip(src) {
                            *acc += g;
                        }
                    }
                }
            }
            Op::Embed { table, ids } => {
                let width = self.value(*table).shape()[1];
                let dt = self.grad_buf(grads, *table);
                for (r, &i) in ids.iter().enumerate() {
                    let src = &dy[r * width..(r + 1) * width];
                    for (acc, &g) in dt[i * width..(i + 1) * width].iter_mut().zip(src) {
                        *acc += g;
                    }
                }
            }
            Op::SoftmaxXent {
                logits,
                probs,
                labels,
                mask,
                count,
            } => {
                let classes = self.value(*logits).last_dim();
                let scale = dy[0] / *count;
                let dl = self.grad_buf(grads, *logits);
                for (r, (dr, pr)) in dl
                    .chunks_exact_mut(classes)
                    .zip(probs.chunks_exact(classes))
                    .enumerate()
                {
                    if mask[r] == T::ZERO {
                        continue;
                    }
                    for (c, (acc, &p)) in dr.iter_mut().zip(pr).enumerate() {
                        let target = if c == labels[r] { T::ONE } else { T::ZERO };
                        *acc += scale * (p - target);
                    }
                }
            }
        }
    }
}
