use crate::error::{Error, Result};

/// `(f(p + eps*d) - f(p - eps*d)) / (2 eps)`
pub fn central_difference(f: impl Fn(&[f64]) -> f64, point: &[f64], direction: &[f64], eps: f64) -> Result<f64> {
    if point.len() != direction.len() {
        return Err(Error::shape("finite-difference direction", [point.len()], [direction.len()]));
    }
    let shifted = |sign: f64| -> Vec<f64> { point.iter().zip(direction).map(|(p, d)| p + sign * eps * d).collect() };
    let (plus, minus) = (f(&shifted(1.0)), f(&shifted(-1.0)));
    if !plus.is_finite() || !minus.is_finite() {
        return Err(Error::NonFinite(format!("objective at point ± eps·direction: {plus}, {minus}")));
    }
    Ok((plus - minus) / (2.0 * eps))
}

/// Relative error between the analytic directional derivative
/// `analytic_grad · direction` and its central-difference estimate.
pub fn grad_check(
    f: impl Fn(&[f64]) -> f64,
    analytic_grad: &[f64],
    point: &[f64],
    direction: &[f64],
    eps: f64,
) -> Result<f64> {
    if analytic_grad.len() != point.len() {
        return Err(Error::shape("analytic gradient", [point.len()], [analytic_grad.len()]));
    }
    let analytic: f64 = analytic_grad.iter().zip(direction).map(|(g, d)| g * d).sum();
    if !analytic.is_finite() {
        return Err(Error::NonFinite(format!("analytic directional derivative {analytic}")));
    }
    let numeric = central_difference(f, point, direction, eps)?;
    Ok((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12))
}
