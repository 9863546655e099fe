//! Declarative experiment configuration (JSON, schema-versioned).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset, NoiseSpec};
use crate::error::{Error, Result};
use crate::loss::LossParams;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub name: String,
    /// LIBSVM text files, concatenated in order.
    #[serde(default)]
    pub paths: Vec<String>,
    /// Synthetic Gaussian mixture instead of files.
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
    /// Optional binary-cache directory keyed by content hash.
    #[serde(default)]
    pub cache_dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_per_cluster: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossConfig {
    pub name: String,
    /// Fixed parameters.
    #[serde(default)]
    pub params: serde_json::Value,
    /// Per-parameter value grids, expanded as a cartesian product.
    #[serde(default)]
    pub grid: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// "clean", "uniform", "pairwise" or "circular".
    pub kind: String,
    #[serde(default)]
    pub rate: f64,
    /// Named class pairs; defaults to the shipped table for the dataset.
    #[serde(default)]
    pub pairs: Option<Vec<(String, String)>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub dataset: DatasetConfig,
    pub losses: Vec<LossConfig>,
    #[serde(default = "default_noises")]
    pub noises: Vec<NoiseConfig>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr_grid")]
    pub lr_grid: Vec<f64>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default = "default_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "default_lr_drops")]
    pub lr_drop_epochs: Vec<usize>,
    #[serde(default)]
    pub hidden: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<String>,
}

fn default_noises() -> Vec<NoiseConfig> {
    vec![NoiseConfig { kind: "clean".into(), rate: 0.0, pairs: None }]
}
fn default_seed() -> u64 {
    7
}
fn default_epochs() -> usize {
    100
}
fn default_batch() -> usize {
    64
}
fn default_lr_grid() -> Vec<f64> {
    vec![0.1, 0.01, 0.001]
}
fn default_folds() -> usize {
    5
}
fn default_test_fraction() -> f64 {
    0.1
}
fn default_momentum() -> f64 {
    0.9
}
fn default_weight_decay() -> f64 {
    5e-3
}
fn default_lr_drops() -> Vec<usize> {
    vec![50, 75]
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::config(format!(
                "unsupported schema_version {} (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.losses.is_empty() {
            return Err(Error::config("at least one loss is required"));
        }
        if self.lr_grid.is_empty() {
            return Err(Error::config("lr_grid must be non-empty"));
        }
        let registry = crate::loss::LossRegistry::with_defaults();
        for loss in &self.losses {
            if !registry.contains(&loss.name) {
                return Err(Error::config(format!(
                    "unknown loss '{}' (known: {:?})",
                    loss.name,
                    registry.names()
                )));
            }
            if loss.grid.values().any(|v| v.is_empty()) {
                return Err(Error::config(format!("empty grid for loss '{}'", loss.name)));
            }
        }
        for noise in &self.noises {
            if !matches!(noise.kind.as_str(), "clean" | "uniform" | "pairwise" | "circular") {
                return Err(Error::config(format!("unknown noise kind '{}'", noise.kind)));
            }
        }
        if self.dataset.paths.is_empty() && self.dataset.synthetic.is_none() {
            return Err(Error::config("dataset needs either paths or a synthetic block"));
        }
        Ok(())
    }

    /// Loads the dataset, preferring the binary cache when configured.
    pub fn load_dataset(&self) -> Result<Dataset> {
        if let Some(synth) = &self.dataset.synthetic {
            return Ok(data::synthetic_gaussians(synth.n_per_cluster, synth.seed));
        }
        let mut text = String::new();
        for p in &self.dataset.paths {
            use std::io::Read;
            std::fs::File::open(p)?.read_to_string(&mut text)?;
            if !text.ends_with('\n') {
                text.push('\n');
            }
        }
        if let Some(dir) = &self.dataset.cache_dir {
            let dir = Path::new(dir);
            std::fs::create_dir_all(dir)?;
            let key = data::content_key(text.as_bytes());
            let cache_path = dir.join(format!("{}-{key}.bin", self.dataset.name));
            if cache_path.exists() {
                if let Ok(cached) = data::read_cache(&cache_path, &self.dataset.name) {
                    return Ok(cached);
                }
            }
            let parsed = data::parse_libsvm(text.as_bytes(), &self.dataset.name)?;
            data::write_cache(&cache_path, &parsed)?;
            return Ok(parsed);
        }
        data::parse_libsvm(text.as_bytes(), &self.dataset.name)
    }

    /// Expands one loss's parameter grid into concrete parameter maps.
    pub fn expand_loss_grid(&self, loss: &LossConfig) -> Result<Vec<LossParams>> {
        let base = if loss.params.is_null() {
            LossParams::new()
        } else {
            LossParams::from_json(&loss.params)?
        };
        let mut out = vec![base];
        for (key, values) in &loss.grid {
            let mut next = Vec::with_capacity(out.len() * values.len());
            for params in &out {
                for &v in values {
                    next.push(params.clone().set(key, v));
                }
            }
            out = next;
        }
        Ok(out)
    }
}

/// Resolves a noise config against a dataset: pairwise rules by class
/// name fall back to the shipped letter/vowel tables.
pub fn resolve_noise(
    noise: &NoiseConfig,
    dataset: &Dataset,
    seed: u64,
) -> Result<Option<NoiseSpec>> {
    match noise.kind.as_str() {
        "clean" => Ok(None),
        "uniform" => Ok(Some(NoiseSpec::uniform(noise.rate, seed))),
        "circular" => Ok(Some(NoiseSpec::circular(noise.rate, seed))),
        "pairwise" => {
            let named = match &noise.pairs {
                Some(p) => p.clone(),
                None => match dataset.name.as_str() {
                    "letter" => data::letter_noise_pairs(),
                    "vowel" => data::vowel_noise_pairs(),
                    "news20" => data::news20_noise_pairs(),
                    other => {
                        return Err(Error::config(format!(
                            "no shipped pairwise rules for dataset '{other}'; list them in the config"
                        )))
                    }
                },
            };
            let pairs = data::resolve_pairs(&named, |name| resolve_class(dataset, name))?;
            Ok(Some(NoiseSpec::pairwise(noise.rate, pairs, seed)))
        }
        other => Err(Error::config(format!("unknown noise kind '{other}'"))),
    }
}

/// Class lookup by name: a direct label token always works; the letter
/// dataset additionally accepts A..Z (mapped to original labels 1..26)
/// and the vowel dataset the phonetic names in their canonical order.
fn resolve_class(dataset: &Dataset, name: &str) -> Option<usize> {
    if let Some(idx) = dataset.class_of(name) {
        return Some(idx);
    }
    if dataset.name == "letter" && name.len() == 1 {
        let ch = name.chars().next().unwrap();
        if ch.is_ascii_uppercase() {
            let original = ((ch as u8 - b'A') as usize + 1).to_string();
            if let Some(idx) = dataset.class_of(&original) {
                return Some(idx);
            }
        }
    }
    if dataset.name == "vowel" {
        if let Some(pos) = data::vowel_class_names().iter().position(|&v| v == name) {
            if let Some(idx) = dataset.class_of(&pos.to_string()) {
                return Some(idx);
            }
        }
    }
    if dataset.name == "news20" {
        if let Some(pos) = data::news20_class_names().iter().position(|&v| v == name) {
            if let Some(idx) = dataset.class_of(&(pos + 1).to_string()) {
                return Some(idx);
            }
        }
    }
    None
}

/// Stable output-file stem `<dataset>_<loss>_<noise>_<seed>`.
pub fn run_stem(dataset: &str, loss: &str, noise: &str, seed: u64) -> String {
    format!("{dataset}_{loss}_{noise}_{seed}")
}

/// Human-readable noise label for file naming ("clean", "uniform0.3", ...).
pub fn noise_label(noise: &NoiseConfig) -> String {
    if noise.kind == "clean" {
        "clean".into()
    } else {
        format!("{}{}", noise.kind, noise.rate)
    }
}
