//! Central finite-difference checking of tape gradients.
//!
//! The numeric side only evaluates the forward function on perturbed copies
//! of the inputs, so it never touches the backward rules it is checking.

use super::{Result, Tape, Tensor, Var};

/// Magnitude below which errors are measured absolutely rather than relative
/// to the gradient.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// (input index, flat entry index, analytic, numeric) of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares analytic gradients of `f` against central differences with step
/// `h` for every entry of every input (or, with `max_per_input`, an evenly
/// strided subset of each input's entries).
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, max_per_input: Option<usize>, f: F) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let loss = f(&tape, &vars)?;
    let grads = tape.gradients_of(loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.get(v).cloned().expect("params are tracked")).collect();

    let eval = |values: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = values.iter().map(|t| tape.constant(t.clone())).collect();
        Ok(f(&tape, &vars)?.value().item())
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        checked: 0,
        worst: None,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let n = input.len();
        let stride = match max_per_input {
            Some(k) if k < n => n.div_ceil(k),
            _ => 1,
        };
        for idx in (0..n).step_by(stride) {
            let orig = input.data()[idx];
            work[i].data_mut()[idx] = orig + h;
            let plus = eval(&work)?;
            work[i].data_mut()[idx] = orig - h;
            let minus = eval(&work)?;
            work[i].data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[i].data()[idx];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = report.max_relative_error.max(err);
                report.worst = Some((i, idx, a, numeric));
            }
        }
    }
    Ok(report)
}
