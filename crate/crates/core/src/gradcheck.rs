//! Central finite-difference checks of tape gradients in `f64`.

use crate::autodiff::{Array, AutodiffError, Tape, Var};

pub const FD_STEP: f64 = 1e-3;
pub const REL_TOLERANCE: f64 = 1e-3;
/// Floor of the error denominator, so exact-zero gradients compare absolutely.
pub const DENOM_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(input, coordinate, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= REL_TOLERANCE
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs().max(numeric.abs()) + DENOM_FLOOR)
}

/// Compares analytic gradients of the scalar built by `f` with central
/// differences, for every coordinate of every input, or every `stride`-th.
pub fn check_gradients<F>(inputs: &[Array<f64>], stride: usize, f: F) -> Result<GradCheckReport, AutodiffError>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var, AutodiffError>,
{
    let eval = |xs: &[Array<f64>]| -> Result<f64, AutodiffError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x)).collect();
    let out = f(&mut tape, &vars)?;
    let mut grads = tape.backward(out)?;
    let analytic: Vec<Array<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, x)| grads.take(v).unwrap_or_else(|| Array::zeros(x.shape())))
        .collect();

    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    let mut xs = inputs.to_vec();
    for i in 0..xs.len() {
        for j in (0..xs[i].len()).step_by(stride.max(1)) {
            let orig = xs[i].data()[j];
            xs[i].data_mut()[j] = orig + FD_STEP;
            let plus = eval(&xs)?;
            xs[i].data_mut()[j] = orig - FD_STEP;
            let minus = eval(&xs)?;
            xs[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic[i].data()[j];
            let err = rel_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((i, j, a, numeric));
            }
        }
    }
    Ok(report)
}
