//! The benchmark runner: cross-validated grid search per loss and noise
//! setting, metric CSV emission, and leaderboard aggregation. Independent
//! (loss, setting, grid point, fold) runs execute on a worker pool.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::config::{noise_label, run_stem, ExperimentConfig, NoiseConfig};
use crate::data::{inject_noise, make_folds, Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::loss::{LossParams, LossRegistry};
use crate::metrics::{leaderboard, CellKey, LeaderboardRow, MetricRecord, SCHEMA_VERSION};
use crate::trainer::{train, TrainConfig, TrainRunReport, TrainTask};

/// Outcome of one (loss, noise) pair after grid selection.
#[derive(Debug)]
pub struct LossRun {
    pub loss_name: String,
    pub noise_name: String,
    pub selected_params: LossParams,
    pub selected_lr: f64,
    /// Mean validation top-1 of the selected grid point across folds.
    pub mean_val_top1: f64,
    /// Per-fold reports of the selected grid point.
    pub fold_reports: Vec<TrainRunReport>,
    pub mean_test_topk: [f64; 5],
    pub std_test_top1: f64,
}

#[derive(Debug)]
pub struct BenchOutcome {
    pub dataset: String,
    pub runs: Vec<LossRun>,
    pub leaderboard: Vec<LeaderboardRow>,
}

/// Builds the worker pool honoring the `LDR_WORKERS` env var.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(n) = std::env::var("LDR_WORKERS") {
        let n: usize = n
            .parse()
            .map_err(|_| Error::config(format!("LDR_WORKERS must be an integer, got '{n}'")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder.build().map_err(|e| Error::config(format!("worker pool: {e}")))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-sample labels under one noise setting; clean returns the originals.
fn noisy_view(
    data: &Dataset,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<(Vec<usize>, Vec<bool>)> {
    match crate::config::resolve_noise(noise, data, seed)? {
        None => Ok((data.labels.clone(), vec![false; data.n])),
        Some(spec) => inject_noise(&data.labels, data.num_classes, &spec),
    }
}

/// Cross-validated training of one grid point; returns per-fold reports.
#[allow(clippy::too_many_arguments)]
pub fn run_grid_point(
    data: &Dataset,
    plan: &FoldPlan,
    noisy_labels: &[usize],
    corrupted: &[bool],
    loss_name: &str,
    params: &LossParams,
    lr: f64,
    base: &TrainConfig,
) -> Result<Vec<TrainRunReport>> {
    let registry = LossRegistry::with_defaults();
    let mut params = params.clone();
    if loss_name == "aldr-kl" && params.get("alpha").is_none() && params.get("k_classes").is_none()
    {
        params = params.set("k_classes", data.num_classes as f64);
    }
    let test_idx = plan.test_indices();
    (0..plan.folds)
        .map(|fold| {
            let loss = registry.build(loss_name, &params)?;
            let (train_idx, val_idx) = plan.split(fold);
            let task = TrainTask {
                data,
                noisy_labels,
                corrupted,
                train: &train_idx,
                val: &val_idx,
                test: &test_idx,
            };
            let config = TrainConfig { lr, seed: base.seed + fold as u64, ..base.clone() };
            train(&task, &config, loss.as_ref())
        })
        .collect()
}

/// Runs the full experiment: every loss on every noise setting with
/// validation-driven grid selection, then the rank leaderboard.
pub fn run_bench(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<BenchOutcome> {
    config.validate()?;
    let data = config.load_dataset()?;
    let plan = make_folds(
        data.n,
        config.test_fraction,
        config.folds,
        Some(&data.labels),
        config.seed,
    )?;
    let base = TrainConfig {
        epochs: config.epochs,
        batch_size: config.batch_size,
        lr: f64::NAN,
        momentum: config.momentum,
        weight_decay: config.weight_decay,
        lr_drop_epochs: config.lr_drop_epochs.clone(),
        seed: config.seed,
        normalize_logits: None,
        hidden: config.hidden,
    };

    let pool = worker_pool()?;
    let mut runs = Vec::new();
    for (noise_idx, noise) in config.noises.iter().enumerate() {
        let noise_seed = config.seed.wrapping_add(0x9e37_79b9 * (noise_idx as u64 + 1));
        let (noisy_labels, corrupted) = noisy_view(&data, noise, noise_seed)?;
        let label = noise_label(noise);

        for loss_cfg in &config.losses {
            let grid = config.expand_loss_grid(loss_cfg)?;
            // all (params, lr) points trained in parallel across the pool
            let points: Vec<(LossParams, f64)> = grid
                .iter()
                .flat_map(|p| config.lr_grid.iter().map(move |&lr| (p.clone(), lr)))
                .collect();
            let results: Vec<Result<Vec<TrainRunReport>>> = pool.install(|| {
                points
                    .par_iter()
                    .map(|(params, lr)| {
                        run_grid_point(
                            &data,
                            &plan,
                            &noisy_labels,
                            &corrupted,
                            &loss_cfg.name,
                            params,
                            *lr,
                            &base,
                        )
                    })
                    .collect()
            });

            let mut best: Option<(usize, f64)> = None;
            let mut reports = Vec::with_capacity(points.len());
            for (idx, res) in results.into_iter().enumerate() {
                let fold_reports = res?;
                let mean_val = fold_reports.iter().map(|r| r.best_val_top1).sum::<f64>()
                    / fold_reports.len() as f64;
                if best.map_or(true, |(_, v)| mean_val > v) {
                    best = Some((idx, mean_val));
                }
                reports.push(fold_reports);
            }
            let (best_idx, mean_val_top1) = best.expect("non-empty grid");
            let fold_reports = std::mem::take(&mut reports[best_idx]);
            let (params, lr) = points[best_idx].clone();

            let mut mean_test_topk = [0.0; 5];
            for r in &fold_reports {
                for k in 0..5 {
                    mean_test_topk[k] += r.best_test_topk[k] / fold_reports.len() as f64;
                }
            }
            let top1s: Vec<f64> = fold_reports.iter().map(|r| r.best_test_topk[0]).collect();
            let (_, std_test_top1) = mean_std(&top1s);

            let run = LossRun {
                loss_name: loss_cfg.name.clone(),
                noise_name: label.clone(),
                selected_params: params,
                selected_lr: lr,
                mean_val_top1,
                fold_reports,
                mean_test_topk,
                std_test_top1,
            };
            if let Some(dir) = out_dir {
                write_run_csv(dir, &data.name, &run, config.seed)?;
            }
            runs.push(run);
        }
    }

    // leaderboard cells: (dataset, setting, k) -> mean test top-k
    let mut table: BTreeMap<String, BTreeMap<CellKey, f64>> = BTreeMap::new();
    for run in &runs {
        let entry = table.entry(run.loss_name.clone()).or_default();
        for k in 1..=5usize {
            entry.insert(
                (data.name.clone(), run.noise_name.clone(), k),
                run.mean_test_topk[k - 1],
            );
        }
    }
    let board = if runs.iter().map(|r| &r.loss_name).collect::<std::collections::BTreeSet<_>>().len()
        > 1
    {
        leaderboard(&table)?
    } else {
        Vec::new()
    };

    Ok(BenchOutcome { dataset: data.name.clone(), runs, leaderboard: board })
}

fn write_run_csv(dir: &Path, dataset: &str, run: &LossRun, seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let stem = run_stem(dataset, &run.loss_name, &run.noise_name, seed);
    let path = dir.join(format!("{stem}.csv"));
    let mut records = Vec::new();
    for (fold, report) in run.fold_reports.iter().enumerate() {
        for em in &report.epochs {
            for (split, topk) in [("val", em.val_topk), ("test", em.test_topk)] {
                let mut rec = MetricRecord::new(&stem, fold, em.epoch, split, topk);
                rec.mean_loss = em.train_loss;
                rec.lambda_clean = em.lambda_clean_mean;
                rec.lambda_noisy = em.lambda_noisy_mean;
                records.push(rec);
            }
        }
    }
    crate::metrics::write_metric_csv(std::fs::File::create(path)?, &records)?;
    Ok(())
}

/// Writes the leaderboard table as CSV.
pub fn write_leaderboard_csv<W: std::io::Write>(out: W, rows: &[LeaderboardRow]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record([
        "schema_version",
        "loss",
        "rank_top1",
        "rank_top2",
        "rank_top3",
        "rank_top4",
        "rank_top5",
        "rank_overall",
    ])?;
    for row in rows {
        let mut record = vec![SCHEMA_VERSION.to_string(), row.loss.clone()];
        for k in 1..=5 {
            record.push(row.per_k.get(&k).map_or(String::new(), |v| v.to_string()));
        }
        record.push(row.overall.to_string());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ExperimentConfig {
        serde_json::from_str(
            r#"{
                "schema_version": 1,
                "dataset": {"name": "synthetic", "synthetic": {"n_per_cluster": 15, "seed": 2}},
                "losses": [{"name": "ce"}, {"name": "ldr-kl", "grid": {"lambda": [1.0, 10.0]}}],
                "noises": [{"kind": "clean"}, {"kind": "uniform", "rate": 0.3}],
                "epochs": 6,
                "folds": 3,
                "lr_grid": [0.1],
                "seed": 11
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn bench_runs_end_to_end_and_ranks() {
        let config = tiny_config();
        let dir = std::env::temp_dir().join(format!("ldr-bench-{}", std::process::id()));
        let outcome = run_bench(&config, Some(&dir)).unwrap();
        assert_eq!(outcome.runs.len(), 4);
        assert_eq!(outcome.leaderboard.len(), 2);
        // rank conservation over two losses
        let total: f64 = outcome.leaderboard.iter().map(|r| r.overall).sum();
        assert!((total - 3.0).abs() < 1e-9);
        // CSV files exist with the deterministic naming scheme
        let expect = dir.join("synthetic-gaussians_ce_clean_11.csv");
        assert!(expect.exists(), "missing {expect:?}");
        let text = std::fs::read_to_string(expect).unwrap();
        assert!(text.starts_with("schema_version,run_id,fold,epoch,split"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn grid_selection_prefers_higher_validation() {
        let config = tiny_config();
        let outcome = run_bench(&config, None).unwrap();
        for run in &outcome.runs {
            assert!(run.mean_val_top1 >= 0.0 && run.mean_val_top1 <= 1.0);
            assert_eq!(run.fold_reports.len(), 3);
        }
    }
}
