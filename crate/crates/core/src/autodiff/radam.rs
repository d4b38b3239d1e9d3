//! Rectified Adam.
//!
//! Moments follow Adam. While the approximated SMA length `rho_t` is at
//! most 5 the adaptive term is dropped and the step is plain bias-corrected
//! momentum; afterwards the adaptive step is scaled by the variance
//! rectification term `r_t`.

use log::warn;

use super::{Array, AutodiffError, Scalar};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;

/// Rectification threshold on `rho_t`.
const RHO_THRESHOLD: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RAdamState<T: Scalar = f32> {
    pub step: u64,
    pub first_moment: Vec<Array<T>>,
    pub second_moment: Vec<Array<T>>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    /// Update applied with the adaptive, rectified step.
    Rectified,
    /// Update applied as bias-corrected momentum (warmup phase).
    Momentum,
    /// A gradient contained a non-finite value; nothing changed.
    Skipped,
}

impl<T: Scalar> RAdamState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Array<T>>, learning_rate: f64) -> Self {
        let shapes: Vec<Vec<usize>> = params.into_iter().map(|p| p.shape().to_vec()).collect();
        Self {
            step: 0,
            first_moment: shapes.iter().map(|s| Array::zeros(s)).collect(),
            second_moment: shapes.iter().map(|s| Array::zeros(s)).collect(),
            learning_rate,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn rho_infinity(&self) -> f64 {
        2.0 / (1.0 - self.beta2) - 1.0
    }

    /// `rho_t` for a 1-based step index.
    pub fn rho(&self, t: u64) -> f64 {
        let b2t = self.beta2.powf(t as f64);
        self.rho_infinity() - 2.0 * t as f64 * b2t / (1.0 - b2t)
    }

    /// Variance rectification term, `None` while still in warmup.
    pub fn rectification(&self, t: u64) -> Option<f64> {
        let rho_t = self.rho(t);
        if rho_t <= RHO_THRESHOLD {
            return None;
        }
        let rho_inf = self.rho_infinity();
        Some(
            ((rho_t - 4.0) * (rho_t - 2.0) * rho_inf / ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t))
                .sqrt(),
        )
    }
}

/// One RAdam update of `params` in place.
pub fn radam_step<T: Scalar>(
    params: &mut [&mut Array<T>],
    grads: &[&Array<T>],
    state: &mut RAdamState<T>,
) -> Result<StepOutcome, AutodiffError> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(AutodiffError::ShapeMismatch {
            op: "radam_step",
            detail: format!(
                "{} params, {} grads, {} moment buffers",
                params.len(),
                grads.len(),
                state.first_moment.len()
            ),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.first_moment[i].shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "radam_step",
                detail: format!(
                    "param {i}: {:?} vs grad {:?} vs moment {:?}",
                    p.shape(),
                    g.shape(),
                    state.first_moment[i].shape()
                ),
            });
        }
    }
    if let Some(i) = grads.iter().position(|g| !g.all_finite()) {
        warn!(
            "radam: non-finite gradient in parameter {i} at step {}, update skipped",
            state.step + 1
        );
        return Ok(StepOutcome::Skipped);
    }

    state.step += 1;
    let t = state.step;
    let (b1, b2) = (state.beta1, state.beta2);
    let bias1 = 1.0 - b1.powf(t as f64);
    let bias2 = 1.0 - b2.powf(t as f64);
    let rect = state.rectification(t);
    let lr = state.learning_rate;

    let (tb1, tb2) = (T::from_f64(b1), T::from_f64(b2));
    let (ob1, ob2) = (T::from_f64(1.0 - b1), T::from_f64(1.0 - b2));
    let eps = T::from_f64(state.epsilon);
    let step_scale = T::from_f64(lr / bias1);
    let bias2_sqrt = T::from_f64(bias2.sqrt());
    let rect_scale = rect.map(|r| T::from_f64(r));

    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.first_moment[i].data_mut();
        let v = state.second_moment[i].data_mut();
        for (((pj, &gj), mj), vj) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *mj = tb1 * *mj + ob1 * gj;
            *vj = tb2 * *vj + ob2 * gj * gj;
            match rect_scale {
                Some(r) => {
                    let adaptive = bias2_sqrt / (vj.sqrt() + eps);
                    *pj -= step_scale * r * adaptive * *mj;
                }
                None => *pj -= step_scale * *mj,
            }
        }
    }
    Ok(if rect.is_some() {
        StepOutcome::Rectified
    } else {
        StepOutcome::Momentum
    })
}
