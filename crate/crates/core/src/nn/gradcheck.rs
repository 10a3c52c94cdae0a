//! Central finite-difference gradient checking.

use super::{NnError, Tape, Tensor, Var};

pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    /// `(param index, element, analytic, numeric)` at the worst element.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// Gradients smaller than this fraction of the loss are compared on an
/// absolute scale: below it, the f64 rounding noise of a central difference
/// (about `f64::EPSILON * |loss| / eps`) is a visible share of the value.
pub const LOSS_RELATIVE_FLOOR: f64 = 1e-5;

/// Relative error with the denominator floored at 1e-8.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    relative_error_with_floor(analytic, numeric, 1e-8)
}

pub fn relative_error_with_floor(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the tape gradient of `loss_fn` against central differences for
/// every parameter element, or for an evenly spaced subset of at most
/// `max_per_param` elements per tensor. The error denominator is floored at
/// `max(1e-8, LOSS_RELATIVE_FLOOR * |loss|)`.
pub fn grad_check<F>(
    params: &[Tensor],
    eps: f64,
    max_per_param: Option<usize>,
    loss_fn: F,
) -> Result<GradCheckReport, NnError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, NnError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = loss_fn(&mut tape, &vars)?;
    let floor = (LOSS_RELATIVE_FLOOR * tape.value(loss).item().abs()).max(1e-8);
    let grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.wrt(v, p))
        .collect();
    drop(tape);

    let eval = |perturbed: &[Tensor]| -> Result<f64, NnError> {
        let mut tape = Tape::inference();
        let vars: Vec<Var> = perturbed.iter().map(|p| tape.param(p.clone())).collect();
        let loss = loss_fn(&mut tape, &vars)?;
        Ok(tape.value(loss).item())
    };

    let mut work = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        worst: None,
    };
    for pi in 0..params.len() {
        let len = params[pi].len();
        let stride = match max_per_param {
            Some(k) if k > 0 && len > k => len.div_ceil(k),
            _ => 1,
        };
        for idx in (0..len).step_by(stride) {
            let orig = params[pi].data()[idx];
            work[pi].data_mut()[idx] = orig + eps;
            let plus = eval(&work)?;
            work[pi].data_mut()[idx] = orig - eps;
            let minus = eval(&work)?;
            work[pi].data_mut()[idx] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[pi].data()[idx];
            let err = relative_error_with_floor(a, numeric, floor);
            report.checked += 1;
            if err >= report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((pi, idx, a, numeric));
            }
        }
    }
    Ok(report)
}
