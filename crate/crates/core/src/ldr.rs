//! The LDR-KL loss with its two extreme cases, and the adaptive
//! ALDR-KL loss with the alternating temperature update.
//!
//! The implemented value keeps the `1/K` factor inside the tempered
//! log-sum-exp, so the temperature-one case equals cross entropy minus
//! `log K`; gradients and argmins are unaffected by that constant.

use crate::error::{Error, Result};
use crate::loss::LossGrad;
use crate::numerics::{ensure_finite, kl_to_uniform, log_sum_exp, tempered_softmax};

/// Per-class margin, a single scalar `c >= 0` applied to every wrong class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginSpec {
    pub c: f64,
}

impl MarginSpec {
    pub const ZERO: MarginSpec = MarginSpec { c: 0.0 };

    pub fn new(c: f64) -> Result<Self> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(Error::domain(format!("margin must be finite and >= 0, got {c}")));
        }
        Ok(MarginSpec { c })
    }
}

/// Margin-shifted score differences `u_k = f_k - f_y + c*1(k != y)`.
///
/// `u_y` is exactly zero by construction.
pub fn shifted_scores(f: &[f64], y: usize, margin: MarginSpec) -> Result<Vec<f64>> {
    ensure_finite(f, "scores")?;
    if y >= f.len() {
        return Err(Error::IndexOutOfRange { index: y, classes: f.len() });
    }
    let fy = f[y];
    let mut u: Vec<f64> = f.iter().map(|&v| v - fy + margin.c).collect();
    u[y] = 0.0;
    Ok(u)
}

/// Lowest-index argmax, the tie rule shared across the crate.
pub fn argmax_tie_low(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Temperature and margin of an LDR-KL loss. `lambda` may be `0.0`
/// (Crammer-Singer hinge) or `f64::INFINITY` (symmetric average).
#[derive(Debug, Clone, Copy)]
pub struct LdrKlParams {
    pub lambda: f64,
    pub margin: MarginSpec,
}

impl LdrKlParams {
    pub fn new(lambda: f64, margin: MarginSpec) -> Result<Self> {
        if lambda.is_nan() || lambda < 0.0 {
            return Err(Error::domain(format!("lambda must be >= 0 or +inf, got {lambda}")));
        }
        Ok(LdrKlParams { lambda, margin })
    }
}

/// Distributional-weight vector for the inner maximization.
///
/// Finite positive `lambda` gives the tempered softmax of the shifted
/// scores; `lambda = inf` is uniform, `lambda = 0` the one-hot argmax
/// with ties broken toward the lowest class index.
pub fn dw_weights(f: &[f64], y: usize, params: &LdrKlParams) -> Result<Vec<f64>> {
    let u = shifted_scores(f, y, params.margin)?;
    Ok(dw_weights_from_shifted(&u, params.lambda))
}

pub(crate) fn dw_weights_from_shifted(u: &[f64], lambda: f64) -> Vec<f64> {
    let k = u.len();
    if lambda == f64::INFINITY {
        vec![1.0 / k as f64; k]
    } else if lambda == 0.0 {
        let mut p = vec![0.0; k];
        p[argmax_tie_low(u)] = 1.0;
        p
    } else {
        tempered_softmax(u, lambda).expect("finite shifted scores")
    }
}

/// LDR-KL loss value and analytic score gradient `p - e_y`.
pub fn ldr_kl(f: &[f64], y: usize, params: &LdrKlParams) -> Result<LossGrad> {
    let u = shifted_scores(f, y, params.margin)?;
    let k = u.len();
    let value = if params.lambda == f64::INFINITY {
        u.iter().sum::<f64>() / k as f64
    } else if params.lambda == 0.0 {
        // max over all k; u_y = 0 makes this the usual hinge form
        u.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    } else {
        log_sum_exp(&u, params.lambda)?
    };
    let mut grad = dw_weights_from_shifted(&u, params.lambda);
    grad[y] -= 1.0;
    Ok(LossGrad { value, grad })
}

/// Prior temperature, quadratic penalty weight and margin of ALDR-KL.
#[derive(Debug, Clone, Copy)]
pub struct AldrKlParams {
    pub lambda0: f64,
    pub alpha: f64,
    pub margin: MarginSpec,
}

impl AldrKlParams {
    pub fn new(lambda0: f64, alpha: f64, margin: MarginSpec) -> Result<Self> {
        if !(lambda0 > 0.0) || !lambda0.is_finite() {
            return Err(Error::domain(format!("lambda0 must be positive and finite, got {lambda0}")));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::domain(format!("alpha must be positive, got {alpha}")));
        }
        Ok(AldrKlParams { lambda0, alpha, margin })
    }

    /// The `alpha = 2 log K / lambda0` choice that pins the adaptive
    /// temperature inside `[lambda0/2, lambda0]`.
    pub fn with_default_alpha(lambda0: f64, classes: usize, margin: MarginSpec) -> Result<Self> {
        Self::new(lambda0, 2.0 * (classes as f64).ln() / lambda0, margin)
    }
}

/// One temperature update: `[lambda0 - KL(p, 1/K)/alpha]_+`.
pub fn aldr_lambda_update(p: &[f64], lambda0: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::domain(format!("alpha must be positive, got {alpha}")));
    }
    let kl = kl_to_uniform(p)?;
    Ok((lambda0 - kl / alpha).max(0.0))
}

/// Exact ALDR-KL solve: value, maximizing temperature and induced weights.
#[derive(Debug, Clone)]
pub struct AldrExact {
    pub value: f64,
    pub lambda_star: f64,
    pub p_star: Vec<f64>,
}

/// Maximizes `g(lambda) = lse_mean(u, lambda) - (alpha/2)(lambda - lambda0)^2`
/// over `lambda >= 0` to 1e-8 absolute tolerance in `lambda`.
///
/// `KL >= 0` forces the maximizer into `[0, lambda0]`. The objective is
/// a difference of convex pieces, so instead of a single derivative
/// bisection we bracket the maximum on a fine grid (boundary included)
/// and polish with golden-section inside the bracket.
pub fn aldr_kl_exact(f: &[f64], y: usize, params: &AldrKlParams) -> Result<AldrExact> {
    let u = shifted_scores(f, y, params.margin)?;
    let lambda0 = params.lambda0;
    let alpha = params.alpha;
    let objective = |lambda: f64| -> f64 {
        let pen = 0.5 * alpha * (lambda - lambda0) * (lambda - lambda0);
        if lambda <= 0.0 {
            // lambda -> 0 limit of the tempered log-sum-exp is max(u)
            u.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - pen
        } else {
            log_sum_exp(&u, lambda).expect("finite shifted scores") - pen
        }
    };

    const GRID: usize = 256;
    let mut best_i = 0;
    let mut best_val = f64::NEG_INFINITY;
    let grid_at = |i: usize| lambda0 * i as f64 / GRID as f64;
    for i in 0..=GRID {
        let v = objective(grid_at(i));
        if v > best_val {
            best_val = v;
            best_i = i;
        }
    }
    let lo = grid_at(best_i.saturating_sub(1));
    let hi = grid_at((best_i + 1).min(GRID));

    // golden-section to 1e-9, > the 1e-8 contract
    let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = objective(x1);
    let mut f2 = objective(x2);
    while b - a > 1e-9 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = objective(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = objective(x1);
        }
    }
    let mut lambda_star = 0.5 * (a + b);
    let mut value = objective(lambda_star);
    // keep the exact boundary when it wins
    let at_zero = objective(0.0);
    if at_zero >= value {
        lambda_star = 0.0;
        value = at_zero;
    }
    let p_star = dw_weights_from_shifted(&u, lambda_star);
    Ok(AldrExact { value, lambda_star, p_star })
}

/// One alternating ALDR-KL update for a training sample.
#[derive(Debug, Clone)]
pub struct AldrStep {
    pub lambda_next: f64,
    /// Loss value at the updated temperature, for logging.
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Algorithm order: weights at the previous temperature, temperature
/// update, then the score gradient at the new temperature.
pub fn aldr_kl_step(f: &[f64], y: usize, lambda_prev: f64, params: &AldrKlParams) -> Result<AldrStep> {
    if !(lambda_prev >= 0.0) {
        return Err(Error::domain(format!("lambda_prev must be >= 0, got {lambda_prev}")));
    }
    let u = shifted_scores(f, y, params.margin)?;
    let p_prev = dw_weights_from_shifted(&u, lambda_prev);
    let lambda_next = aldr_lambda_update(&p_prev, params.lambda0, params.alpha)?;
    let mut grad = dw_weights_from_shifted(&u, lambda_next);
    grad[y] -= 1.0;
    let value = if lambda_next == 0.0 {
        u.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    } else {
        log_sum_exp(&u, lambda_next)?
    };
    Ok(AldrStep { lambda_next, value, grad })
}
