//! Central finite-difference verification of hand-written backward passes.

use super::param::Module;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `name[index]` of the entry with the largest error.
    pub worst: String,
    /// Analytic and numeric gradient at `worst`.
    pub worst_pair: (f64, f64),
    pub checked: usize,
    /// Entries left out because the step crossed a non-differentiable point.
    pub skipped: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compare analytic and numeric gradients for every parameter of `model`.
///
/// `loss_and_backward` must compute a scalar loss from the current parameter values and
/// accumulate its gradient into the parameters. It must be deterministic; inputs whose
/// gradients should be checked can be wrapped as parameters of a probe module.
pub fn grad_check<T, M, F>(model: &mut M, loss_and_backward: F, step: f64) -> Result<GradCheckReport>
where
    T: Real,
    M: Module<T>,
    F: FnMut(&mut M) -> Result<T>,
{
    check(model, loss_and_backward, step, None)
}

/// [`grad_check`] for piecewise-smooth models (PReLU, ReLU). Every entry is also
/// differenced with a step ten times smaller; when the two estimates disagree by more
/// than `kink_tol` relative error the step straddles a kink and the entry is skipped
/// (counted in `skipped`) instead of compared.
pub fn grad_check_piecewise<T, M, F>(model: &mut M, loss_and_backward: F, step: f64, kink_tol: f64) -> Result<GradCheckReport>
where
    T: Real,
    M: Module<T>,
    F: FnMut(&mut M) -> Result<T>,
{
    check(model, loss_and_backward, step, Some(kink_tol))
}

fn check<T, M, F>(model: &mut M, mut loss_and_backward: F, step: f64, kink_tol: Option<f64>) -> Result<GradCheckReport>
where
    T: Real,
    M: Module<T>,
    F: FnMut(&mut M) -> Result<T>,
{
    model.zero_grad();
    loss_and_backward(model)?;
    let analytic: Vec<(String, Vec<f64>)> = model
        .params()
        .into_iter()
        .map(|(n, p)| (n, p.grad.data().iter().map(|v| v.as_f64()).collect()))
        .collect();
    for (name, g) in &analytic {
        if let Some(k) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name}[{k}]")));
        }
    }

    let mut numeric_at = |model: &mut M, pi: usize, k: usize, step: f64| -> Result<f64> {
        let h = T::lit(step);
        let orig = model.params()[pi].1.value.data()[k];
        model.params_mut()[pi].1.value.data_mut()[k] = orig + h;
        let plus = loss_and_backward(model)?;
        model.params_mut()[pi].1.value.data_mut()[k] = orig - h;
        let minus = loss_and_backward(model)?;
        model.params_mut()[pi].1.value.data_mut()[k] = orig;
        Ok((plus - minus).as_f64() / (2.0 * step))
    };
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: String::new(),
        worst_pair: (0.0, 0.0),
        checked: 0,
        skipped: 0,
    };
    for (pi, (name, grads)) in analytic.iter().enumerate() {
        for (k, &a) in grads.iter().enumerate() {
            let numeric = numeric_at(model, pi, k, step)?;
            if !numeric.is_finite() {
                return Err(Error::NonFinite(format!("numeric gradient of {name}[{k}]")));
            }
            if let Some(tol) = kink_tol {
                let fine = numeric_at(model, pi, k, step / 10.0)?;
                if relative_error(numeric, fine) > tol {
                    report.skipped += 1;
                    continue;
                }
            }
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_err || report.worst.is_empty() {
                report.max_rel_err = err.max(report.max_rel_err);
                report.worst = format!("{name}[{k}]");
                report.worst_pair = (a.as_f64(), numeric);
            }
        }
    }
    model.zero_grad();
    Ok(report)
}
