//! Acceptance suite. Each test prints one pass/fail line; the two
//! benchmark-dataset criteria run only when the LIBSVM files are
//! present (see `data_dir`) and otherwise print a SKIP line with fetch
//! instructions.

use std::path::PathBuf;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use ldr_core::baselines::{symmetry_sum, CrossEntropy, MeanAbsoluteError, NormalizedCe};
use ldr_core::calibration::run_battery;
use ldr_core::config::{resolve_noise, NoiseConfig};
use ldr_core::data::{inject_noise, load_libsvm_files, make_folds, Dataset};
use ldr_core::gradcheck::gradient_suite;
use ldr_core::ldr::{ldr_kl, LdrKlParams, MarginSpec};
use ldr_core::loss::{Loss, LossParams};
use ldr_core::metrics::{leaderboard, CellKey};
use ldr_core::synth::{run_synth, SynthProtocol};
use ldr_core::topk::{omega_k_argmax, omega_k_oracle};
use ldr_core::trainer::TrainConfig;

fn pass(criterion: usize, what: &str) {
    println!("[criterion {criterion:2}] {what}: PASS");
}

fn skip(criterion: usize, what: &str, why: &str) {
    println!("[criterion {criterion:2}] {what}: SKIP ({why})");
}

/// Dataset directory: `LDR_DATA_DIR` or `<workspace>/data`.
fn data_dir() -> PathBuf {
    std::env::var("LDR_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|_| {
            PathBuf::from(env!("CARGO_MANIFEST_DIR"))
                .join("../../data")
        })
}

fn random_scores(rng: &mut ChaCha8Rng, max_k: usize) -> (Vec<f64>, usize) {
    let k = rng.gen_range(2..=max_k);
    let f: Vec<f64> = (0..k).map(|_| rng.gen_range(-4.0..4.0)).collect();
    let y = rng.gen_range(0..k);
    (f, y)
}

#[test]
fn c01_gradient_suite() {
    let started = Instant::now();
    let results = gradient_suite(7, 200).unwrap();
    for r in &results {
        assert!(
            r.passed,
            "{} exceeded tolerance: max rel err {:.3e}",
            r.name, r.max_rel_err
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "gradient suite took {elapsed:?}, budget 1 minute");
    pass(1, &format!("gradient suite ({} losses x 200 instances in {elapsed:?})", results.len()));
}

#[test]
fn c02_ce_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = LdrKlParams::new(1.0, MarginSpec::ZERO).unwrap();
    for _ in 0..1000 {
        let (f, y) = random_scores(&mut rng, 30);
        let k = f.len() as f64;
        let ldr = ldr_kl(&f, y, &params).unwrap();
        let ce = CrossEntropy.evaluate(&f, y).unwrap();
        assert!(
            (ldr.value - (ce.value - k.ln())).abs() <= 1e-10,
            "value mismatch: {} vs {}",
            ldr.value,
            ce.value - k.ln()
        );
        for (a, b) in ldr.grad.iter().zip(&ce.grad) {
            assert!((a - b).abs() <= 1e-12, "gradient mismatch: {a} vs {b}");
        }
    }
    pass(2, "temperature-one LDR-KL equals CE minus log K (1000 instances)");
}

#[test]
fn c03_interpolation_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let (f, y) = random_scores(&mut rng, 30);
        let c = rng.gen_range(0.0..2.0);
        let lambda = rng.gen_range(0.01f64..50.0);
        let margin = MarginSpec::new(c).unwrap();
        let cs = ldr_kl(&f, y, &LdrKlParams::new(0.0, margin).unwrap()).unwrap().value;
        let v = ldr_kl(&f, y, &LdrKlParams::new(lambda, margin).unwrap()).unwrap().value;
        let k = f.len() as f64;
        assert!(v <= cs + 1e-9, "upper bound violated: {v} > {cs}");
        assert!(v >= cs - lambda * k.ln() - 1e-9, "lower bound violated");
    }
    pass(3, "hinge sandwich psi_CS - lambda log K <= psi_lambda <= psi_CS (1000 instances)");
}

#[test]
fn c04_symmetry() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let k = rng.gen_range(2..=12);
        let f: Vec<f64> = (0..k).map(|_| rng.gen_range(-6.0..6.0)).collect();
        let c = rng.gen_range(0.0..2.0);
        let params = LdrKlParams::new(f64::INFINITY, MarginSpec::new(c).unwrap()).unwrap();
        let total: f64 = (0..k).map(|j| ldr_kl(&f, j, &params).unwrap().value).sum();
        assert!(
            (total - c * (k as f64 - 1.0)).abs() <= 1e-9,
            "symmetric-extreme sum {total} != (K-1)c"
        );

        let mae_sum = symmetry_sum(&MeanAbsoluteError, &f).unwrap();
        assert!((mae_sum - 2.0 * (k as f64 - 1.0)).abs() <= 1e-8);
        let nce_sum = symmetry_sum(&NormalizedCe, &f).unwrap();
        assert!((nce_sum - 1.0).abs() <= 1e-8);
    }
    // non-constant witness for CE
    let a = symmetry_sum(&CrossEntropy, &[0.0, 0.0, 0.0]).unwrap();
    let b = symmetry_sum(&CrossEntropy, &[3.0, -1.0, 0.5]).unwrap();
    assert!((a - b).abs() > 1e-3, "expected CE symmetry sums to differ: {a} vs {b}");
    pass(4, "symmetric sums: (K-1)c at lambda=inf, 2(K-1) for MAE, 1 for NCE; CE witness");
}

#[test]
fn c05_projection_solver_vs_oracle_and_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for trial in 0..1000 {
        let n = rng.gen_range(2..=50);
        let spread = rng.gen_range(0.5..4.0);
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-spread..spread)).collect();
        let lambda = rng.gen_range(0.05f64..20.0);
        let k = rng.gen_range(1..=n);
        let sol = omega_k_argmax(&q, lambda, k).unwrap();
        let oracle = omega_k_oracle(&q, lambda, k, 80_000).unwrap();
        let kf = n as f64;
        let oracle_obj: f64 = oracle
            .iter()
            .zip(&q)
            .map(|(&p, &qi)| p * qi - if p > 0.0 { lambda * p * (p * kf).ln() } else { 0.0 })
            .sum();
        assert!(
            (sol.objective - oracle_obj).abs() <= 1e-8 || sol.objective > oracle_obj,
            "trial {trial}: objective gap {}",
            sol.objective - oracle_obj
        );
        assert!(sol.objective >= oracle_obj - 1e-8, "oracle beat the solver");
        for (i, (a, b)) in sol.p.iter().zip(&oracle).enumerate() {
            assert!(
                (a - b).abs() <= 1e-6,
                "trial {trial} coordinate {i}: {a} vs {b} (lambda {lambda}, k {k})"
            );
        }
    }

    // empirical O(K log K): doubling K at most 2.5x the best-of-reps time
    let time_at = |n: usize, rng: &mut ChaCha8Rng| -> f64 {
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let k = (n / 10).max(1);
        // warm-up pass keeps allocator and cache effects out of the timing
        std::hint::black_box(omega_k_argmax(&q, 1.0, k).unwrap().objective);
        (0..15)
            .map(|_| {
                let t = Instant::now();
                let sol = omega_k_argmax(&q, 1.0, k).unwrap();
                std::hint::black_box(sol.objective);
                t.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    for base in [1_000usize, 10_000, 100_000] {
        let t1 = time_at(base, &mut rng);
        let t2 = time_at(2 * base, &mut rng);
        let ratio = t2 / t1;
        println!("  omega_k_argmax: K={base} best {t1:.2e}s, 2K best {t2:.2e}s, ratio {ratio:.2}");
        assert!(
            ratio <= 2.5,
            "doubling K={base} scaled time by {ratio:.2} (> 2.5)"
        );
    }
    pass(5, "capped-simplex solver matches PGD oracle (1000 cases) and scales ~K log K");
}

#[test]
fn c06_calibration_lab() {
    let started = Instant::now();
    let results = run_battery(17, false).unwrap();
    for r in &results {
        assert!(r.passed, "claim '{}' failed with residual {:.3e}", r.claim, r.residual);
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 300, "calibration lab took {elapsed:?}, budget 5 minutes");
    pass(6, &format!("calibration lab, {} claims in {elapsed:?}", results.len()));
}

#[test]
fn c07_aldr_lambda_band() {
    let data = ldr_core::data::synthetic_gaussians(40, 3);
    let (noisy, corrupted) =
        inject_noise(&data.labels, 3, &ldr_core::data::NoiseSpec::uniform(0.3, 5)).unwrap();
    let n = data.n;
    let train: Vec<usize> = (0..n).filter(|i| i % 10 != 0).collect();
    let val: Vec<usize> = (0..n).filter(|i| i % 10 == 0).collect();
    let task = ldr_core::trainer::TrainTask {
        data: &data,
        noisy_labels: &noisy,
        corrupted: &corrupted,
        train: &train,
        val: &val,
        test: &val,
    };
    let lambda0 = 1.0;
    let loss = ldr_core::loss::LossRegistry::with_defaults()
        .build(
            "aldr-kl",
            &LossParams::new().set("lambda0", lambda0).set("k_classes", 3.0),
        )
        .unwrap();
    let config = TrainConfig { epochs: 40, lr: 0.05, seed: 9, ..Default::default() };
    let report = ldr_core::trainer::train(&task, &config, loss.as_ref()).unwrap();
    for em in &report.epochs {
        let lo = em.lambda_min.expect("adaptive run tracks lambda range");
        let hi = em.lambda_max.unwrap();
        assert!(
            lo >= lambda0 / 2.0 - 1e-12 && hi <= lambda0 + 1e-12,
            "epoch {}: lambda range [{lo}, {hi}] escapes [lambda0/2, lambda0]",
            em.epoch
        );
    }
    pass(7, "per-sample lambda stays in [lambda0/2, lambda0] across a full training run");
}

#[test]
fn c08_synthetic_probe_reproduction() {
    let started = Instant::now();
    let outcome = run_synth(&SynthProtocol::default()).unwrap();
    let elapsed = started.elapsed();
    assert!(
        outcome.lambda_noisy >= 10.0 * outcome.lambda_clean,
        "lambda(mislabeled) = {:.4} is not >= 10x lambda(clean) = {:.4}",
        outcome.lambda_noisy,
        outcome.lambda_clean
    );
    assert!(
        outcome.lambda_noisy > 1.0,
        "mislabeled probe temperature collapsed: {}",
        outcome.lambda_noisy
    );
    assert!(elapsed.as_secs() < 60, "synthetic protocol took {elapsed:?}, budget 1 minute");
    pass(
        8,
        &format!(
            "probe temperatures: mislabeled {:.3} vs clean {:.3} in {elapsed:?}",
            outcome.lambda_noisy, outcome.lambda_clean
        ),
    );
}

fn load_benchmark(name: &str, files: &[&str]) -> Option<Dataset> {
    let dir = data_dir();
    let paths: Vec<PathBuf> = files
        .iter()
        .map(|f| dir.join(f))
        .filter(|p| p.exists())
        .collect();
    if paths.is_empty() {
        return None;
    }
    Some(load_libsvm_files(&paths, name).expect("parse benchmark dataset"))
}

const FETCH_HINT: &str = "place the LIBSVM files under data/ (see README, 'Benchmark datasets')";

#[test]
fn c09_vowel_lambda_adaptivity() {
    let Some(data) = load_benchmark("vowel", &["vowel.scale", "vowel.scale.t"]) else {
        skip(9, "vowel adaptive-lambda separation", FETCH_HINT);
        return;
    };
    let seed = 7u64;
    let plan = make_folds(data.n, 0.1, 5, Some(&data.labels), seed).unwrap();
    let noise = NoiseConfig { kind: "uniform".into(), rate: 0.3, pairs: None };
    let spec = resolve_noise(&noise, &data, seed ^ 0xfeed).unwrap().unwrap();
    let (noisy, corrupted) = inject_noise(&data.labels, data.num_classes, &spec).unwrap();

    for lambda0 in [1.0, 10.0] {
        let params = LossParams::new()
            .set("lambda0", lambda0)
            .set("k_classes", data.num_classes as f64);
        // the adaptivity study fixes the learning rate at 1e-2 under the
        // conventional momentum-SGD step; our trainer uses the
        // (1-beta)-weighted recursion, so the equivalent rate is 1e-2/(1-0.9)
        let lr = 0.1;
        let base = TrainConfig { lr, seed, ..Default::default() };
        let reports = ldr_core::bench::run_grid_point(
            &data, &plan, &noisy, &corrupted, "aldr-kl", &params, lr, &base,
        )
        .unwrap();
        let mut mean_noisy = 0.0;
        let mut mean_clean = 0.0;
        for report in &reports {
            let last = report.epochs.last().unwrap();
            mean_noisy += last.lambda_noisy_mean.unwrap() / reports.len() as f64;
            mean_clean += last.lambda_clean_mean.unwrap() / reports.len() as f64;
        }
        assert!(
            mean_noisy > mean_clean,
            "lambda0 = {lambda0}: corrupted-mean {mean_noisy:.4} <= clean-mean {mean_clean:.4}"
        );
        println!(
            "  vowel lambda0={lambda0}: final-epoch lambda corrupted {mean_noisy:.4} > clean {mean_clean:.4}"
        );
    }
    pass(9, "vowel uniform-0.3: corrupted samples keep larger temperatures (5-fold mean)");
}

#[test]
fn c10_desk_scale_tables() {
    let started = Instant::now();
    let Some(vowel) = load_benchmark("vowel", &["vowel.scale", "vowel.scale.t"]) else {
        skip(10, "vowel/letter clean top-1 reproduction", FETCH_HINT);
        return;
    };
    let Some(letter) = load_benchmark("letter", &["letter.scale"]) else {
        skip(10, "vowel/letter clean top-1 reproduction", FETCH_HINT);
        return;
    };
    let seed = 7u64;
    let clean = |data: &Dataset| (data.labels.clone(), vec![false; data.n]);

    // 5-fold CV with the benchmark grids; selection by mean validation top-1
    let run_loss = |data: &Dataset, loss: &str, grid_key: Option<&str>| -> (f64, f64) {
        let plan = make_folds(data.n, 0.1, 5, Some(&data.labels), seed).unwrap();
        let (labels, corrupted) = clean(data);
        // the paper's {1e-1, 1e-2, 1e-3} grid, widened by one notch so the
        // same effective steps are covered under the (1-beta)-weighted
        // momentum recursion regardless of the paper's step convention
        let lr_grid = [1.0, 0.1, 0.01, 0.001];
        let lambda_grid = [0.1, 1.0, 10.0];
        let mut best: Option<(f64, Vec<f64>)> = None;
        let base = TrainConfig { seed, ..Default::default() };
        let param_sets: Vec<LossParams> = match grid_key {
            Some(key) => lambda_grid
                .iter()
                .map(|&v| {
                    LossParams::new()
                        .set(key, v)
                        .set("c", 0.1)
                })
                .collect(),
            None => vec![LossParams::new()],
        };
        for params in &param_sets {
            let mut params = params.clone();
            if loss == "aldr-kl" {
                params = params.set("k_classes", data.num_classes as f64);
            }
            for &lr in &lr_grid {
                let reports = ldr_core::bench::run_grid_point(
                    data, &plan, &labels, &corrupted, loss, &params, lr, &base,
                )
                .unwrap();
                let mean_val: f64 = reports.iter().map(|r| r.best_val_top1).sum::<f64>()
                    / reports.len() as f64;
                let tops: Vec<f64> = reports.iter().map(|r| r.best_test_topk[0]).collect();
                if best.as_ref().map_or(true, |(v, _)| mean_val > *v) {
                    best = Some((mean_val, tops));
                }
            }
        }
        let (_, tops) = best.unwrap();
        let mean = tops.iter().sum::<f64>() / tops.len() as f64;
        let std = (tops.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>()
            / tops.len() as f64)
            .sqrt();
        (mean * 100.0, std * 100.0)
    };

    let (aldr_vowel, aldr_sd) = run_loss(&vowel, "aldr-kl", Some("lambda0"));
    let (ce_vowel, ce_sd) = run_loss(&vowel, "ce", None);
    println!("  vowel clean top-1: aldr-kl {aldr_vowel:.1} ({aldr_sd:.1}), ce {ce_vowel:.1} ({ce_sd:.1})");
    assert!(
        (aldr_vowel - 71.3).abs() <= 6.5,
        "vowel aldr-kl clean top-1 {aldr_vowel:.1} outside 71.3 +/- 6.5"
    );
    assert!(
        (ce_vowel - 63.0).abs() <= 6.5,
        "vowel ce clean top-1 {ce_vowel:.1} outside 63.0 +/- 6.5"
    );
    assert!(
        aldr_vowel > ce_vowel,
        "vowel clean: aldr-kl {aldr_vowel:.1} did not beat ce {ce_vowel:.1}"
    );

    let (ldr_letter, ldr_sd) = run_loss(&letter, "ldr-kl", Some("lambda"));
    let (ce_letter, ce2_sd) = run_loss(&letter, "ce", None);
    println!("  letter clean top-1: ldr-kl {ldr_letter:.1} ({ldr_sd:.1}), ce {ce_letter:.1} ({ce2_sd:.1})");
    assert!(
        (ldr_letter - 80.1).abs() <= 4.0,
        "letter ldr-kl clean top-1 {ldr_letter:.1} outside 80.1 +/- 4"
    );
    assert!(
        (ce_letter - 74.2).abs() <= 4.0,
        "letter ce clean top-1 {ce_letter:.1} outside 74.2 +/- 4"
    );

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 1800, "criterion 10 took {elapsed:?}, budget 30 minutes");
    pass(10, &format!("vowel/letter clean top-1 within tolerance in {elapsed:?}"));
}

#[test]
fn c11_leaderboard_fixtures() {
    // hand-computed fixture: 3 losses, 2 datasets x 1 setting x 2 ks
    let mk = |cells: &[((&str, &str, usize), f64)]| -> std::collections::BTreeMap<CellKey, f64> {
        cells
            .iter()
            .map(|((d, s, k), v)| ((d.to_string(), s.to_string(), *k), *v))
            .collect()
    };
    let mut table = std::collections::BTreeMap::new();
    table.insert(
        "alpha".to_string(),
        mk(&[
            (("d1", "clean", 1), 0.90),
            (("d1", "clean", 2), 0.95),
            (("d2", "clean", 1), 0.40),
            (("d2", "clean", 2), 0.80),
        ]),
    );
    table.insert(
        "beta".to_string(),
        mk(&[
            (("d1", "clean", 1), 0.80),
            (("d1", "clean", 2), 0.95),
            (("d2", "clean", 1), 0.60),
            (("d2", "clean", 2), 0.70),
        ]),
    );
    table.insert(
        "gamma".to_string(),
        mk(&[
            (("d1", "clean", 1), 0.70),
            (("d1", "clean", 2), 0.60),
            (("d2", "clean", 1), 0.50),
            (("d2", "clean", 2), 0.90),
        ]),
    );
    let rows = leaderboard(&table).unwrap();
    let row = |name: &str| rows.iter().find(|r| r.loss == name).unwrap();
    // hand computation:
    // d1/k1: alpha 1, beta 2, gamma 3; d1/k2: alpha 1.5, beta 1.5, gamma 3
    // d2/k1: alpha 3, beta 1, gamma 2;  d2/k2: alpha 2, beta 3, gamma 1
    assert_eq!(row("alpha").per_k[&1], 2.0);
    assert_eq!(row("alpha").per_k[&2], 1.75);
    assert_eq!(row("alpha").overall, 1.875);
    assert_eq!(row("beta").per_k[&1], 1.5);
    assert_eq!(row("beta").per_k[&2], 2.25);
    assert_eq!(row("beta").overall, 1.875);
    assert_eq!(row("gamma").per_k[&1], 2.5);
    assert_eq!(row("gamma").per_k[&2], 2.0);
    assert_eq!(row("gamma").overall, 2.25);
    // rank conservation across the three losses
    let mean: f64 = rows.iter().map(|r| r.overall).sum::<f64>() / 3.0;
    assert!((mean - 2.0).abs() < 1e-12);
    pass(11, "leaderboard mean ranks match hand-computed fixtures exactly");
}
