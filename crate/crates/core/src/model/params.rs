use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Array, Gradients, Scalar, Tape, Var};
use crate::perm::FlattenKind;

/// Residual gate target at initialization: `sigmoid(s) = r`.
pub const RESIDUAL_INIT: f64 = 0.9;

/// Initial value of every component of `s`, `logit(0.9) = ln 9`.
pub fn s_init() -> f64 {
    (RESIDUAL_INIT / (1.0 - RESIDUAL_INIT)).ln()
}

/// Initial value of `h`, `sqrt(1 - r^2) * 0.25`.
pub fn h_init() -> f64 {
    (1.0 - RESIDUAL_INIT * RESIDUAL_INIT).sqrt() * 0.25
}

/// Weights of one quaternary switch unit operating on `4m` features.
///
/// `z` maps `4m -> 8m` and is stored `[4m, 8m]`; `w` maps back `8m -> 4m`.
#[derive(Debug, Clone, PartialEq)]
pub struct QsuWeights<T: Scalar = f32> {
    pub z: Array<T>,
    pub rms_gain: Array<T>,
    pub w: Array<T>,
    pub b: Array<T>,
    pub s: Array<T>,
    pub h: Array<T>,
}

/// One Beneš block: the forward half and its mirror each share a single
/// unit across all their layers; the closing layer has its own.
#[derive(Debug, Clone, PartialEq)]
pub struct BenesBlockWeights<T: Scalar = f32> {
    pub forward_shared: QsuWeights<T>,
    pub mirror_shared: QsuWeights<T>,
    pub final_layer: QsuWeights<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T: Scalar = f32> {
    pub m: usize,
    pub vocab_in: usize,
    pub vocab_out: usize,
    pub flatten_kind: FlattenKind,
    /// `[vocab_in, m]`
    pub embedding: Array<T>,
    pub blocks: Vec<BenesBlockWeights<T>>,
    /// `[m, m]`, followed by GELU
    pub head_hidden_w: Array<T>,
    pub head_hidden_b: Array<T>,
    /// `[m, vocab_out]`
    pub head_out_w: Array<T>,
    pub head_out_b: Array<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitOptions {
    pub flatten_kind: FlattenKind,
    /// Multiplier on the variance-scaling bounds of `z`, `w`, embedding and head.
    pub weight_scale: f64,
}

impl Default for InitOptions {
    fn default() -> Self {
        Self {
            flatten_kind: FlattenKind::Zorder,
            weight_scale: 1.0,
        }
    }
}

fn uniform<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, scale: f64) -> Array<T> {
    let limit = scale * (3.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64(rng.gen_range(-limit..=limit)))
        .collect();
    Array::new(shape.to_vec(), data).expect("positive extents")
}

impl QsuWeights<f32> {
    fn init(m: usize, rng: &mut ChaCha8Rng, scale: f64) -> Self {
        let (d, hid) = (4 * m, 8 * m);
        Self {
            z: uniform(rng, &[d, hid], d, scale),
            rms_gain: Array::ones(&[hid]),
            w: uniform(rng, &[hid, d], hid, scale),
            b: Array::zeros(&[d]),
            s: Array::full(&[d], s_init() as f32),
            h: Array::scalar(h_init() as f32),
        }
    }
}

impl<T: Scalar> QsuWeights<T> {
    pub const FIELDS: [&'static str; 6] = ["z", "rms_gain", "w", "b", "s", "h"];

    fn tensors(&self) -> [&Array<T>; 6] {
        [&self.z, &self.rms_gain, &self.w, &self.b, &self.s, &self.h]
    }

    fn tensors_mut(&mut self) -> [&mut Array<T>; 6] {
        [
            &mut self.z,
            &mut self.rms_gain,
            &mut self.w,
            &mut self.b,
            &mut self.s,
            &mut self.h,
        ]
    }

    /// `64 m^2 + 16 m + 1`
    pub fn count(m: usize) -> usize {
        64 * m * m + 16 * m + 1
    }
}

/// Parameters for a fresh network with default options.
pub fn init_params(m: usize, blocks: usize, vocab_in: usize, vocab_out: usize, seed: u64) -> ModelParams {
    init_params_with(m, blocks, vocab_in, vocab_out, seed, InitOptions::default())
}

pub fn init_params_with(
    m: usize,
    blocks: usize,
    vocab_in: usize,
    vocab_out: usize,
    seed: u64,
    opts: InitOptions,
) -> ModelParams {
    assert!(m >= 1 && blocks >= 1, "m and block count must be positive");
    assert!(vocab_in >= 1 && vocab_out >= 1, "vocabularies must be non-empty");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = opts.weight_scale;
    // one-hot input: unit fan-in
    let embedding = uniform(&mut rng, &[vocab_in, m], 1, scale);
    let blocks = (0..blocks)
        .map(|_| BenesBlockWeights {
            forward_shared: QsuWeights::init(m, &mut rng, scale),
            mirror_shared: QsuWeights::init(m, &mut rng, scale),
            final_layer: QsuWeights::init(m, &mut rng, scale),
        })
        .collect();
    ModelParams {
        m,
        vocab_in,
        vocab_out,
        flatten_kind: opts.flatten_kind,
        embedding,
        blocks,
        head_hidden_w: uniform(&mut rng, &[m, m], m, scale),
        head_hidden_b: Array::zeros(&[m]),
        head_out_w: uniform(&mut rng, &[m, vocab_out], m, scale),
        head_out_b: Array::zeros(&[vocab_out]),
    }
}

/// Closed-form learnable scalar count of the Beneš blocks alone.
pub fn block_param_count(m: usize, blocks: usize) -> usize {
    blocks * 3 * QsuWeights::<f32>::count(m)
}

/// Closed-form total learnable scalar count.
pub fn param_count_formula(m: usize, blocks: usize, vocab_in: usize, vocab_out: usize) -> usize {
    block_param_count(m, blocks) + vocab_in * m + (m * m + m) + (m * vocab_out + vocab_out)
}

impl<T: Scalar> ModelParams<T> {
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Every learnable array with a stable name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Array<T>)> {
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        for (i, blk) in self.blocks.iter().enumerate() {
            for (part, q) in [
                ("forward", &blk.forward_shared),
                ("mirror", &blk.mirror_shared),
                ("final", &blk.final_layer),
            ] {
                for (field, t) in QsuWeights::<T>::FIELDS.iter().zip(q.tensors()) {
                    out.push((format!("block{i}.{part}.{field}"), t));
                }
            }
        }
        out.push(("head.hidden.w".into(), &self.head_hidden_w));
        out.push(("head.hidden.b".into(), &self.head_hidden_b));
        out.push(("head.out.w".into(), &self.head_out_w));
        out.push(("head.out.b".into(), &self.head_out_b));
        out
    }

    /// Same order as [`ModelParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Array<T>> {
        let mut out = vec![&mut self.embedding];
        for blk in self.blocks.iter_mut() {
            out.extend(blk.forward_shared.tensors_mut());
            out.extend(blk.mirror_shared.tensors_mut());
            out.extend(blk.final_layer.tensors_mut());
        }
        out.push(&mut self.head_hidden_w);
        out.push(&mut self.head_hidden_b);
        out.push(&mut self.head_out_w);
        out.push(&mut self.head_out_b);
        out
    }

    /// Learnable scalar count by summing array sizes.
    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, a)| a.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let q = |w: &QsuWeights<T>| QsuWeights {
            z: w.z.cast(),
            rms_gain: w.rms_gain.cast(),
            w: w.w.cast(),
            b: w.b.cast(),
            s: w.s.cast(),
            h: w.h.cast(),
        };
        ModelParams {
            m: self.m,
            vocab_in: self.vocab_in,
            vocab_out: self.vocab_out,
            flatten_kind: self.flatten_kind,
            embedding: self.embedding.cast(),
            blocks: self
                .blocks
                .iter()
                .map(|b| BenesBlockWeights {
                    forward_shared: q(&b.forward_shared),
                    mirror_shared: q(&b.mirror_shared),
                    final_layer: q(&b.final_layer),
                })
                .collect(),
            head_hidden_w: self.head_hidden_w.cast(),
            head_hidden_b: self.head_hidden_b.cast(),
            head_out_w: self.head_out_w.cast(),
            head_out_b: self.head_out_b.cast(),
        }
    }

    /// Records every parameter as a gradient leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape<T>) -> BoundParams {
        self.bind_with(tape, true)
    }

    pub(crate) fn bind_with(&self, tape: &mut Tape<T>, trainable: bool) -> BoundParams {
        let mut leaf = |a: &Array<T>| {
            if trainable {
                tape.param(a)
            } else {
                tape.constant(a.clone())
            }
        };
        let mut q = |w: &QsuWeights<T>| BoundQsu {
            z: leaf(&w.z),
            rms_gain: leaf(&w.rms_gain),
            w: leaf(&w.w),
            b: leaf(&w.b),
            s: leaf(&w.s),
            h: leaf(&w.h),
        };
        let blocks = self
            .blocks
            .iter()
            .map(|b| BoundBlock {
                forward_shared: q(&b.forward_shared),
                mirror_shared: q(&b.mirror_shared),
                final_layer: q(&b.final_layer),
            })
            .collect();
        BoundParams {
            m: self.m,
            vocab_in: self.vocab_in,
            flatten_kind: self.flatten_kind,
            embedding: leaf(&self.embedding),
            blocks,
            head_hidden_w: leaf(&self.head_hidden_w),
            head_hidden_b: leaf(&self.head_hidden_b),
            head_out_w: leaf(&self.head_out_w),
            head_out_b: leaf(&self.head_out_b),
        }
    }

    /// Gradient arrays in [`ModelParams::named_tensors`] order; parameters
    /// the loss did not reach get zeros.
    pub fn collect_grads(&self, bound: &BoundParams, grads: &mut Gradients<T>) -> Vec<Array<T>> {
        let shapes: Vec<Vec<usize>> = self
            .named_tensors()
            .iter()
            .map(|(_, a)| a.shape().to_vec())
            .collect();
        bound
            .vars()
            .into_iter()
            .zip(shapes)
            .map(|(v, s)| grads.take(v).unwrap_or_else(|| Array::zeros(&s)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundQsu {
    pub z: Var,
    pub rms_gain: Var,
    pub w: Var,
    pub b: Var,
    pub s: Var,
    pub h: Var,
}

impl BoundQsu {
    fn vars(&self) -> [Var; 6] {
        [self.z, self.rms_gain, self.w, self.b, self.s, self.h]
    }
}

#[derive(Debug, Clone)]
pub struct BoundBlock {
    pub forward_shared: BoundQsu,
    pub mirror_shared: BoundQsu,
    pub final_layer: BoundQsu,
}

/// Tape handles for a [`ModelParams`].
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub m: usize,
    pub vocab_in: usize,
    pub flatten_kind: FlattenKind,
    pub embedding: Var,
    pub blocks: Vec<BoundBlock>,
    pub head_hidden_w: Var,
    pub head_hidden_b: Var,
    pub head_out_w: Var,
    pub head_out_b: Var,
}

impl BoundParams {
    pub fn vars(&self) -> Vec<Var> {
        let mut out = vec![self.embedding];
        for b in &self.blocks {
            out.extend(b.forward_shared.vars());
            out.extend(b.mirror_shared.vars());
            out.extend(b.final_layer.vars());
        }
        out.extend([
            self.head_hidden_w,
            self.head_hidden_b,
            self.head_out_w,
            self.head_out_b,
        ]);
        out
    }
}
