//! Mini-batch training loop: momentum updates in the `(1-beta)`-weighted
//! form, step-wise learning-rate drops, validation-based early stopping,
//! and the per-sample adaptive-temperature bookkeeping for ALDR-KL.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::loss::Loss;
use crate::mlp::{MlpGrads, MlpModel};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Learning rate divides by ten after each listed epoch.
    pub lr_drop_epochs: Vec<usize>,
    pub seed: u64,
    /// Overrides the loss's own preference when set.
    pub normalize_logits: Option<bool>,
    pub hidden: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 5e-3,
            lr_drop_epochs: vec![50, 75],
            seed: 0,
            normalize_logits: None,
            hidden: None,
        }
    }
}

/// One training run's inputs: row indices into a shared dataset plus the
/// (possibly noisy) label view for train/val. Test rows always read the
/// clean dataset labels.
pub struct TrainTask<'a> {
    pub data: &'a Dataset,
    /// Length-n label vector used for train and val rows.
    pub noisy_labels: &'a [usize],
    /// Length-n corruption mask (final label differs from original).
    pub corrupted: &'a [bool],
    pub train: &'a [usize],
    pub val: &'a [usize],
    pub test: &'a [usize],
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_topk: [f64; 5],
    pub test_topk: [f64; 5],
    pub lambda_clean_mean: Option<f64>,
    pub lambda_noisy_mean: Option<f64>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainRunReport {
    pub epochs: Vec<EpochMetrics>,
    /// 1-based epoch with the highest validation top-1.
    pub best_epoch: usize,
    pub best_val_top1: f64,
    /// Test top-k of the best-validation checkpoint.
    pub best_test_topk: [f64; 5],
    pub best_model: MlpModel,
    pub final_model: MlpModel,
    /// Final per-sample temperatures, aligned with `task.train` (ALDR only).
    pub final_lambda: Option<Vec<f64>>,
}

/// Momentum buffer in the `m = beta m + (1 - beta) G` form.
pub struct OptimState {
    pub m: MlpGrads,
    pub beta: f64,
    pub weight_decay: f64,
}

impl OptimState {
    pub fn new(model: &MlpModel, beta: f64, weight_decay: f64) -> Self {
        OptimState { m: MlpGrads::zeros(model), beta, weight_decay }
    }

    /// Weight decay joins the raw gradient before the momentum average.
    pub fn step(&mut self, model: &mut MlpModel, grads: &MlpGrads, lr: f64) {
        let beta = self.beta;
        let wd = self.weight_decay;
        let apply = |param: &mut [f64], grad: &[f64], m: &mut [f64]| {
            for i in 0..param.len() {
                let g = grad[i] + wd * param[i];
                m[i] = beta * m[i] + (1.0 - beta) * g;
                param[i] -= lr * m[i];
            }
        };
        apply(&mut model.w1, &grads.w1, &mut self.m.w1);
        apply(&mut model.b1, &grads.b1, &mut self.m.b1);
        apply(&mut model.w2, &grads.w2, &mut self.m.w2);
        apply(&mut model.b2, &grads.b2, &mut self.m.b2);
    }
}

/// Learning rate at a 1-based epoch under ten-fold drops.
pub fn lr_at_epoch(base: f64, epoch: usize, drops: &[usize]) -> f64 {
    let n = drops.iter().filter(|&&d| epoch > d).count() as i32;
    base / 10f64.powi(n)
}

fn topk_row(scores: &[f64], label: usize, k: usize) -> bool {
    let better = scores
        .iter()
        .enumerate()
        .filter(|&(j, &s)| s > scores[label] || (s == scores[label] && j < label))
        .count();
    better < k
}

fn eval_topk(model: &MlpModel, data: &Dataset, idx: &[usize], labels: &[usize]) -> [f64; 5] {
    let mut hits = [0usize; 5];
    if idx.is_empty() {
        return [0.0; 5];
    }
    for &i in idx {
        let logits = model.forward(data.row(i), false).logits;
        for k in 1..=5 {
            if topk_row(&logits, labels[i], k.min(model.k)) {
                hits[k - 1] += 1;
            }
        }
    }
    let n = idx.len() as f64;
    let mut out = [0.0; 5];
    for k in 0..5 {
        out[k] = hits[k] as f64 / n;
    }
    out
}

/// Runs the full training loop from a fresh seeded initialization.
pub fn train(task: &TrainTask, config: &TrainConfig, loss: &dyn Loss) -> Result<TrainRunReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = MlpModel::new(task.data.d, task.data.num_classes, config.hidden, &mut rng);
    train_with_rng(model, rng, task, config, loss)
}

/// Continues training from an existing model (momentum buffer resets).
pub fn train_from(
    model: MlpModel,
    task: &TrainTask,
    config: &TrainConfig,
    loss: &dyn Loss,
) -> Result<TrainRunReport> {
    let rng = ChaCha8Rng::seed_from_u64(config.seed);
    train_with_rng(model, rng, task, config, loss)
}

fn train_with_rng(
    model: MlpModel,
    mut rng: ChaCha8Rng,
    task: &TrainTask,
    config: &TrainConfig,
    loss: &dyn Loss,
) -> Result<TrainRunReport> {
    let data = task.data;
    let mut model = model;
    let mut optim = OptimState::new(&model, config.momentum, config.weight_decay);
    let normalize = config
        .normalize_logits
        .unwrap_or_else(|| loss.wants_logit_normalization());

    let adaptive = loss.adaptive();
    // temperature state binds to positions in task.train, not batch order
    let mut lambda: Vec<f64> = match adaptive {
        Some(a) => vec![a.lambda_init(); task.train.len()],
        None => Vec::new(),
    };

    let mut order: Vec<usize> = (0..task.train.len()).collect();
    let mut epochs_out = Vec::with_capacity(config.epochs);
    let mut best_epoch = 0usize;
    let mut best_val_top1 = f64::NEG_INFINITY;
    let mut best_model = model.clone();

    for epoch in 1..=config.epochs {
        let lr = lr_at_epoch(config.lr, epoch, &config.lr_drop_epochs);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;

        for (batch_no, batch) in order.chunks(config.batch_size).enumerate() {
            let mut grads = MlpGrads::zeros(&model);
            for &j in batch {
                let row_idx = task.train[j];
                let x = data.row(row_idx);
                let y = task.noisy_labels[row_idx];
                let fwd = model.forward(x, normalize);
                if fwd.normalized.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Diverged { epoch, batch: batch_no, loss: f64::NAN });
                }
                let (value, dl_dg) = match adaptive {
                    Some(a) => {
                        let step = a.step(&fwd.normalized, y, lambda[j])?;
                        lambda[j] = step.lambda_next;
                        (step.value, step.grad)
                    }
                    None => {
                        let lg = loss.evaluate(&fwd.normalized, y)?;
                        (lg.value, lg.grad)
                    }
                };
                if !value.is_finite() {
                    return Err(Error::Diverged { epoch, batch: batch_no, loss: value });
                }
                loss_sum += value;
                seen += 1;
                model.backward(&fwd, &dl_dg, &mut grads);
            }
            grads.scale(1.0 / batch.len() as f64);
            optim.step(&mut model, &grads, lr);
        }

        let val_topk = eval_topk(&model, data, task.val, task.noisy_labels);
        let test_topk = eval_topk(&model, data, task.test, &data.labels);
        let (lambda_min, lambda_max) = if adaptive.is_some() {
            let lo = lambda.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = lambda.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (Some(lo), Some(hi))
        } else {
            (None, None)
        };
        let (lambda_clean_mean, lambda_noisy_mean) = if adaptive.is_some() {
            let mut clean = (0.0, 0usize);
            let mut noisy = (0.0, 0usize);
            for (j, &row_idx) in task.train.iter().enumerate() {
                if task.corrupted[row_idx] {
                    noisy = (noisy.0 + lambda[j], noisy.1 + 1);
                } else {
                    clean = (clean.0 + lambda[j], clean.1 + 1);
                }
            }
            (
                (clean.1 > 0).then(|| clean.0 / clean.1 as f64),
                (noisy.1 > 0).then(|| noisy.0 / noisy.1 as f64),
            )
        } else {
            (None, None)
        };

        if val_topk[0] > best_val_top1 {
            best_val_top1 = val_topk[0];
            best_epoch = epoch;
            best_model = model.clone();
        }
        epochs_out.push(EpochMetrics {
            epoch,
            lr,
            train_loss: loss_sum / seen.max(1) as f64,
            val_topk,
            test_topk,
            lambda_clean_mean,
            lambda_noisy_mean,
            lambda_min,
            lambda_max,
        });
    }

    let best_test_topk = eval_topk(&best_model, data, task.test, &data.labels);
    Ok(TrainRunReport {
        epochs: epochs_out,
        best_epoch,
        best_val_top1,
        best_test_topk,
        best_model,
        final_model: model,
        final_lambda: adaptive.map(|_| lambda),
    })
}
