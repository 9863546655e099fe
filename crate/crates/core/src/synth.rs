//! The synthetic probe experiment: pretrain on clean Gaussian mixture
//! data with cross entropy, append one hard-but-clean probe and one
//! mislabeled probe, finetune with the adaptive loss, and compare the
//! per-sample temperatures the two probes end up with.
//!
//! This protocol runs on raw logits: the adaptive temperature reacts to
//! the absolute score spread, which the L1 normalization would clamp.

use crate::data::{synthetic_gaussians, Dataset};
use crate::error::Result;
use crate::ldr::MarginSpec;
use crate::loss::AldrKlLoss;
use crate::mlp::{decision_grid, MlpModel};
use crate::trainer::{train, train_from, TrainConfig, TrainRunReport, TrainTask};

/// The clean probe: a circle-class point pulled toward the interior,
/// correctly labeled. The model ends up confident here, so its adaptive
/// temperature collapses.
pub const CLEAN_PROBE: [f64; 2] = [0.7, 0.7];
pub const CLEAN_PROBE_LABEL: usize = 0;

/// The mislabeled probe: a circle-class draw in the sparse margin zone,
/// labeled as the adjacent anti-diagonal class. The surrounding data
/// keeps the contest unresolved, so its temperature stays near the prior.
pub const NOISY_PROBE: [f64; 2] = [0.8, 0.15];
pub const NOISY_PROBE_LABEL: usize = 2;

#[derive(Debug, Clone)]
pub struct SynthProtocol {
    pub n_per_cluster: usize,
    pub seed: u64,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub lr: f64,
    pub lambda0: f64,
    pub alpha: f64,
    pub margin: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub hidden: Option<usize>,
    pub clean_probe: ([f64; 2], usize),
    pub noisy_probe: ([f64; 2], usize),
}

impl Default for SynthProtocol {
    fn default() -> Self {
        SynthProtocol {
            n_per_cluster: 50,
            seed: 7,
            pretrain_epochs: 1000,
            finetune_epochs: 100,
            lr: 0.01,
            lambda0: 10.0,
            alpha: 0.05,
            margin: 0.1,
            batch_size: 64,
            weight_decay: 0.0,
            hidden: Some(16),
            clean_probe: (CLEAN_PROBE, CLEAN_PROBE_LABEL),
            noisy_probe: (NOISY_PROBE, NOISY_PROBE_LABEL),
        }
    }
}

#[derive(Debug)]
pub struct SynthOutcome {
    pub data: Dataset,
    pub pretrained: MlpModel,
    pub ce_finetuned: MlpModel,
    pub aldr_finetuned: MlpModel,
    /// Final temperature of the hard-but-clean probe.
    pub lambda_clean: f64,
    /// Final temperature of the mislabeled probe.
    pub lambda_noisy: f64,
    pub aldr_report: TrainRunReport,
}

pub fn run_synth(protocol: &SynthProtocol) -> Result<SynthOutcome> {
    let base = synthetic_gaussians(protocol.n_per_cluster, protocol.seed);
    let all: Vec<usize> = (0..base.n).collect();
    let no_noise = vec![false; base.n];
    let pretask = TrainTask {
        data: &base,
        noisy_labels: &base.labels,
        corrupted: &no_noise,
        train: &all,
        val: &all,
        test: &all,
    };
    let pre_config = TrainConfig {
        epochs: protocol.pretrain_epochs,
        batch_size: protocol.batch_size,
        lr: protocol.lr,
        momentum: 0.9,
        weight_decay: protocol.weight_decay,
        lr_drop_epochs: vec![],
        seed: protocol.seed,
        normalize_logits: Some(false),
        hidden: protocol.hidden,
    };
    let ce = crate::baselines::CrossEntropy;
    let pre = train(&pretask, &pre_config, &ce)?;

    let mut data = base.clone();
    data.push_probe(&protocol.clean_probe.0, protocol.clean_probe.1);
    data.push_probe(&protocol.noisy_probe.0, protocol.noisy_probe.1);
    let all: Vec<usize> = (0..data.n).collect();
    let mut corrupted = vec![false; data.n];
    corrupted[data.n - 1] = true;
    let task = TrainTask {
        data: &data,
        noisy_labels: &data.labels,
        corrupted: &corrupted,
        train: &all,
        val: &all,
        test: &all,
    };
    let tune_config = TrainConfig {
        epochs: protocol.finetune_epochs,
        seed: protocol.seed + 1,
        ..pre_config.clone()
    };

    let aldr = AldrKlLoss {
        params: crate::ldr::AldrKlParams::new(
            protocol.lambda0,
            protocol.alpha,
            MarginSpec::new(protocol.margin)?,
        )?,
    };
    let aldr_report = train_from(pre.final_model.clone(), &task, &tune_config, &aldr)?;
    let ce_report = train_from(pre.final_model.clone(), &task, &tune_config, &ce)?;

    let lambda = aldr_report.final_lambda.as_ref().expect("adaptive loss");
    let lambda_clean = lambda[data.n - 2];
    let lambda_noisy = lambda[data.n - 1];
    Ok(SynthOutcome {
        data,
        pretrained: pre.final_model,
        ce_finetuned: ce_report.final_model,
        aldr_finetuned: aldr_report.final_model.clone(),
        lambda_clean,
        lambda_noisy,
        aldr_report,
    })
}

/// Writes a decision grid as `x,y,class` CSV rows.
pub fn write_grid_csv<W: std::io::Write>(
    mut out: W,
    model: &MlpModel,
    bounds: (f64, f64, f64, f64),
    resolution: usize,
) -> Result<()> {
    let grid = decision_grid(model, bounds, resolution)?;
    writeln!(out, "x,y,class")?;
    let (x0, x1, y0, y1) = bounds;
    for (cell, class) in grid.iter().enumerate() {
        let ix = cell % resolution;
        let iy = cell / resolution;
        let x = x0 + (x1 - x0) * ix as f64 / (resolution - 1).max(1) as f64;
        let y = y0 + (y1 - y0) * iy as f64 / (resolution - 1).max(1) as f64;
        writeln!(out, "{x},{y},{class}")?;
    }
    Ok(())
}
