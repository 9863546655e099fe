//! Finite-difference verification of every analytic gradient in the
//! registry, shared by the `gradcheck` CLI subcommand and the
//! acceptance suite.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::ldr::{aldr_kl_step, ldr_kl, shifted_scores, AldrKlParams, LdrKlParams, MarginSpec};
use crate::loss::{Loss, LossParams, LossRegistry};
use crate::numerics::{finite_diff_grad, grad_rel_error, log_sum_exp, DEFAULT_FD_STEP};

#[derive(Debug, Clone)]
pub struct GradCheckResult {
    pub name: String,
    pub instances: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

pub const GRAD_TOL: f64 = 1e-5;

fn random_scores(rng: &mut ChaCha8Rng) -> (Vec<f64>, usize) {
    let k = rng.gen_range(2..=30);
    let f: Vec<f64> = (0..k).map(|_| rng.gen_range(-4.0..4.0)).collect();
    let y = rng.gen_range(0..k);
    (f, y)
}

/// Hinge-style losses are checked away from their kinks.
fn near_hinge_kink(f: &[f64], y: usize, c: f64) -> bool {
    f.iter()
        .enumerate()
        .any(|(j, &v)| j != y && (v - f[y] + c).abs() < 1e-3)
}

fn check_loss(
    name: &str,
    loss: &dyn Loss,
    rng: &mut ChaCha8Rng,
    instances: usize,
    skip: impl Fn(&[f64], usize) -> bool,
) -> GradCheckResult {
    let mut done = 0;
    let mut max_err = 0.0f64;
    while done < instances {
        let (f, y) = random_scores(rng);
        if skip(&f, y) {
            continue;
        }
        let lg = loss.evaluate(&f, y).expect("loss evaluation");
        let fd = finite_diff_grad(|x| loss.evaluate(x, y).unwrap().value, &f, DEFAULT_FD_STEP);
        max_err = max_err.max(grad_rel_error(&lg.grad, &fd));
        done += 1;
    }
    GradCheckResult { name: name.into(), instances, max_rel_err: max_err, passed: max_err <= GRAD_TOL }
}

/// One ALDR alternating step: the returned gradient must match finite
/// differences of the tempered log-sum-exp at the frozen new temperature.
fn check_aldr_step(rng: &mut ChaCha8Rng, instances: usize) -> Result<GradCheckResult> {
    let mut max_err = 0.0f64;
    for _ in 0..instances {
        let (f, y) = random_scores(rng);
        let lambda0 = rng.gen_range(0.5..10.0);
        let params = AldrKlParams::with_default_alpha(lambda0, f.len(), MarginSpec::new(0.1)?)?;
        let lambda_prev = rng.gen_range(0.0..lambda0);
        let step = aldr_kl_step(&f, y, lambda_prev, &params)?;
        let lambda_next = step.lambda_next;
        assert!(lambda_next > 0.0, "default alpha keeps lambda positive");
        let fd = finite_diff_grad(
            |x| {
                let u = shifted_scores(x, y, params.margin).unwrap();
                log_sum_exp(&u, lambda_next).unwrap()
            },
            &f,
            DEFAULT_FD_STEP,
        );
        max_err = max_err.max(grad_rel_error(&step.grad, &fd));
    }
    Ok(GradCheckResult {
        name: "aldr-kl (step, fixed lambda)".into(),
        instances,
        max_rel_err: max_err,
        passed: max_err <= GRAD_TOL,
    })
}

/// Runs every gradient suite; `instances` per loss (acceptance uses 200).
pub fn gradient_suite(seed: u64, instances: usize) -> Result<Vec<GradCheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let registry = LossRegistry::with_defaults();
    let mut results = Vec::new();

    for &lambda in &[0.1, 1.0, 10.0, f64::INFINITY, 0.0] {
        let params = LdrKlParams::new(lambda, MarginSpec::new(0.1)?)?;
        let name = format!("ldr-kl lambda={lambda}");
        let piecewise = lambda == 0.0;
        let mut done = 0;
        let mut max_err = 0.0f64;
        while done < instances {
            let (f, y) = random_scores(&mut rng);
            if piecewise && near_hinge_kink(&f, y, params.margin.c) {
                continue;
            }
            let lg = ldr_kl(&f, y, &params)?;
            let fd = finite_diff_grad(
                |x| ldr_kl(x, y, &params).unwrap().value,
                &f,
                DEFAULT_FD_STEP,
            );
            max_err = max_err.max(grad_rel_error(&lg.grad, &fd));
            done += 1;
        }
        results.push(GradCheckResult {
            name,
            instances,
            max_rel_err: max_err,
            passed: max_err <= GRAD_TOL,
        });
    }

    results.push(check_aldr_step(&mut rng, instances)?);

    let kkl = registry.build("ldr-k-kl", &LossParams::new().set("lambda", 0.7).set("k", 3.0))?;
    results.push(check_loss("ldr-k-kl", kkl.as_ref(), &mut rng, instances, |f, _| f.len() < 3));

    let tksvm = registry.build("topk-svm", &LossParams::new().set("k", 2.0))?;
    results.push(check_loss("topk-svm", tksvm.as_ref(), &mut rng, instances, |f, y| {
        // off the hinge kinks (u_y is identically zero and kink-free) and
        // off ties at the k-th selection boundary
        let u = shifted_scores(f, y, MarginSpec::new(0.1).unwrap()).unwrap();
        let kink = u.iter().enumerate().any(|(i, &v)| i != y && v.abs() < 1e-3);
        let mut h: Vec<f64> = u.iter().map(|&v| v.max(0.0)).collect();
        h.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let boundary_tie = h.len() > 2 && h[1] > 0.0 && (h[1] - h[2]).abs() < 1e-3;
        kink || boundary_tie
    }));

    for name in [
        "ce", "cs", "ww", "mae", "nce", "rll", "gce", "tgce", "sce", "js", "mse", "agce", "aul",
        "nce+rce", "nce+agce", "nce+aul",
    ] {
        let loss = registry.build(name, &LossParams::new())?;
        let result = match name {
            "cs" | "ww" => {
                check_loss(name, loss.as_ref(), &mut rng, instances, |f, y| {
                    near_hinge_kink(f, y, 1.0)
                })
            }
            "tgce" => check_loss(name, loss.as_ref(), &mut rng, instances, |f, _| {
                let p = crate::numerics::tempered_softmax(f, 1.0).unwrap();
                p.iter().any(|&v| (v - 0.5).abs() < 1e-3)
            }),
            _ => check_loss(name, loss.as_ref(), &mut rng, instances, |_, _| false),
        };
        results.push(result);
    }

    Ok(results)
}
