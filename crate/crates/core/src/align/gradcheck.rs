//! Central finite-difference verification of analytic gradients.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    /// `max_i |a_i - f_i| / max(1e-12, |a_i| + |f_i|)`
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub coordinates: usize,
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{what} evaluated to {v}")))
    }
}

/// `(f(x + eps e_i) - f(x - eps e_i)) / (2 eps)` for every coordinate.
pub fn finite_difference_gradient<F>(loss: F, params: &[f64], epsilon: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut x = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        x[i] = params[i] + epsilon;
        let plus = finite(loss(&x)?, "loss")?;
        x[i] = params[i] - epsilon;
        let minus = finite(loss(&x)?, "loss")?;
        x[i] = params[i];
        out.push((plus - minus) / (2.0 * epsilon));
    }
    Ok(out)
}

/// Compares the analytic gradient returned by `eval` at `params` with
/// central finite differences of the loss returned by `eval`.
pub fn grad_check<F>(eval: F, params: &[f64], epsilon: f64) -> Result<GradCheckReport>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (loss, analytic) = eval(params)?;
    finite(loss, "loss")?;
    if analytic.len() != params.len() {
        return Err(Error::Dimension(format!(
            "analytic gradient has {} entries for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let numeric = finite_difference_gradient(|p| eval(p).map(|(l, _)| l), params, epsilon)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        coordinates: params.len(),
    };
    for (i, (a, f)) in analytic.iter().zip(&numeric).enumerate() {
        let err = (a - f).abs() / (a.abs() + f.abs()).max(1e-12);
        if !err.is_finite() {
            return Err(Error::NonFinite(format!("gradient coordinate {i}")));
        }
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = i;
        }
    }
    Ok(report)
}
