//! Numerically stable scalar/vector kernels shared by every loss.
//!
//! All exp-family kernels subtract the running maximum before
//! exponentiating; the naive formulas overflow already at moderate
//! score gaps once the temperature drops below 1.

use crate::error::{Error, Result};

/// Checks every entry for NaN/inf and returns a domain error otherwise.
pub fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::domain(format!("{what} contains non-finite entry {v}")));
    }
    Ok(())
}

/// `scale * log((1/K) * sum_k exp(u_k / scale))`, max-shifted.
///
/// Bounded by `[max(u) - scale*log(K), max(u)]` for every input.
pub fn log_sum_exp(u: &[f64], scale: f64) -> Result<f64> {
    ensure_finite(u, "log_sum_exp input")?;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::domain(format!("log_sum_exp scale must be positive, got {scale}")));
    }
    let k = u.len();
    if k == 0 {
        return Err(Error::domain("log_sum_exp of empty vector"));
    }
    let max = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = u.iter().map(|&v| ((v - max) / scale).exp()).sum();
    Ok(max + scale * (sum.ln() - (k as f64).ln()))
}

/// Softmax of `u / scale`; the output sums to one within 1e-12.
pub fn tempered_softmax(u: &[f64], scale: f64) -> Result<Vec<f64>> {
    ensure_finite(u, "tempered_softmax input")?;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::domain(format!(
            "tempered_softmax scale must be positive, got {scale}"
        )));
    }
    let max = u.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = u.iter().map(|&v| ((v - max) / scale).exp()).collect();
    let sum: f64 = p.iter().sum();
    for v in &mut p {
        *v /= sum;
    }
    Ok(p)
}

/// `KL(p, 1/K) = sum_k p_k log(p_k * K)` with the `0 log 0 := 0` convention.
///
/// Expects `p` on the simplex; only negativity is rejected here so that
/// sub-simplex callers can reuse the kernel.
pub fn kl_to_uniform(p: &[f64]) -> Result<f64> {
    ensure_finite(p, "kl_to_uniform input")?;
    let k = p.len() as f64;
    let mut kl = 0.0;
    for &v in p {
        if v < 0.0 {
            return Err(Error::domain(format!("kl_to_uniform: negative entry {v}")));
        }
        if v > 0.0 {
            kl += v * (v * k).ln();
        }
    }
    // Uniform input can land a hair below zero in floating point.
    Ok(kl.max(0.0))
}

/// Central-difference gradient `(f(x + h e_k) - f(x - h e_k)) / 2h`.
pub fn finite_diff_grad<F>(fun: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = fun(&probe);
        probe[i] = x[i] - h;
        let minus = fun(&probe);
        probe[i] = x[i];
        grad.push((plus - minus) / (2.0 * h));
    }
    grad
}

/// Default central-difference step for unit-scale inputs.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Max relative error between two gradients, scaled by the larger norm.
pub fn grad_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = analytic
        .iter()
        .chain(numeric.iter())
        .fold(0.0f64, |m, &v| m.max(v.abs()))
        .max(1.0);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / scale)
        .fold(0.0, f64::max)
}
