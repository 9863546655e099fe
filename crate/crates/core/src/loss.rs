//! Loss strategy trait and the name-keyed registry.
//!
//! Every loss variant lives behind [`Loss`]; the registry builds boxed
//! trait objects from a stable lowercase name plus a parameter map, which
//! is how configs and the CLI select a loss at runtime.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::ldr::{AldrKlParams, LdrKlParams, MarginSpec};

/// A loss value together with its score gradient.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// A multi-class loss over raw prediction scores.
pub trait Loss: Send + Sync {
    /// Registry name of this loss.
    fn name(&self) -> &'static str;

    /// Value and `d loss / d scores` at scores `f` for true class `y`.
    fn evaluate(&self, f: &[f64], y: usize) -> Result<LossGrad>;

    /// Whether the trainer should feed L1-normalized logits to this loss.
    fn wants_logit_normalization(&self) -> bool {
        false
    }

    /// Adaptive-temperature interface, present for ALDR-KL only.
    fn adaptive(&self) -> Option<&dyn AdaptiveLoss> {
        None
    }
}

/// Per-sample state protocol for losses with an adaptive temperature.
pub trait AdaptiveLoss {
    /// Initial per-sample temperature.
    fn lambda_init(&self) -> f64;

    /// One alternating update given the sample's previous temperature.
    fn step(&self, f: &[f64], y: usize, lambda_prev: f64) -> Result<crate::ldr::AldrStep>;
}

/// Named real-valued hyperparameters. Each loss interprets its own keys;
/// unknown keys are rejected at build time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossParams(pub BTreeMap<String, f64>);

impl LossParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, key: &str, value: f64) -> Self {
        self.0.insert(key.to_string(), value);
        self
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.0.get(key).copied()
    }

    pub fn get_or(&self, key: &str, default: f64) -> f64 {
        self.get(key).unwrap_or(default)
    }

    pub fn require(&self, key: &str, loss: &str) -> Result<f64> {
        self.get(key)
            .ok_or_else(|| Error::config(format!("loss '{loss}' requires parameter '{key}'")))
    }

    pub(crate) fn check_keys(&self, loss: &str, allowed: &[&str]) -> Result<()> {
        for key in self.0.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::config(format!(
                    "loss '{loss}' does not accept parameter '{key}' (allowed: {allowed:?})"
                )));
            }
        }
        Ok(())
    }

    /// Parses a JSON object of numbers; the strings "inf"/"infinity"
    /// are accepted for the LDR-KL temperature.
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let mut map = BTreeMap::new();
        let obj = value
            .as_object()
            .ok_or_else(|| Error::config("loss params must be a JSON object"))?;
        for (k, v) in obj {
            let num = match v {
                serde_json::Value::Number(n) => n
                    .as_f64()
                    .ok_or_else(|| Error::config(format!("parameter '{k}' is not a float")))?,
                serde_json::Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
                    "inf" | "infinity" | "+inf" => f64::INFINITY,
                    other => other
                        .parse::<f64>()
                        .map_err(|_| Error::config(format!("parameter '{k}' = '{other}' is not numeric")))?,
                },
                _ => return Err(Error::config(format!("parameter '{k}' must be numeric"))),
            };
            map.insert(k.clone(), num);
        }
        Ok(LossParams(map))
    }
}

type Builder = fn(&LossParams) -> Result<Box<dyn Loss>>;

/// Name-keyed builders for every loss variant in the crate.
pub struct LossRegistry {
    builders: BTreeMap<&'static str, Builder>,
}

impl LossRegistry {
    pub fn empty() -> Self {
        LossRegistry { builders: BTreeMap::new() }
    }

    /// Registry with every built-in loss.
    pub fn with_defaults() -> Self {
        let mut reg = Self::empty();
        reg.register("ldr-kl", build_ldr_kl);
        reg.register("aldr-kl", build_aldr_kl);
        reg.register("ldr-k-kl", build_ldr_k_kl);
        reg.register("topk-svm", build_topk_svm);
        crate::baselines::register_all(&mut reg);
        reg
    }

    pub fn register(&mut self, name: &'static str, builder: Builder) {
        self.builders.insert(name, builder);
    }

    pub fn build(&self, name: &str, params: &LossParams) -> Result<Box<dyn Loss>> {
        let builder = self
            .builders
            .get(name)
            .ok_or_else(|| Error::config(format!("unknown loss '{name}'")))?;
        builder(params)
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.builders.keys().copied().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.builders.contains_key(name)
    }
}

pub(crate) fn margin_from(params: &LossParams, default: f64) -> Result<MarginSpec> {
    MarginSpec::new(params.get_or("c", default))
}

/// Default margin used by the LDR family in the benchmark protocol.
pub const DEFAULT_MARGIN: f64 = 0.1;

// ---- LDR family strategies -------------------------------------------------

pub struct LdrKlLoss {
    pub params: LdrKlParams,
}

impl Loss for LdrKlLoss {
    fn name(&self) -> &'static str {
        "ldr-kl"
    }

    fn evaluate(&self, f: &[f64], y: usize) -> Result<LossGrad> {
        crate::ldr::ldr_kl(f, y, &self.params)
    }

    fn wants_logit_normalization(&self) -> bool {
        true
    }
}

fn build_ldr_kl(params: &LossParams) -> Result<Box<dyn Loss>> {
    params.check_keys("ldr-kl", &["lambda", "c"])?;
    let lambda = params.require("lambda", "ldr-kl")?;
    let margin = margin_from(params, DEFAULT_MARGIN)?;
    Ok(Box::new(LdrKlLoss { params: LdrKlParams::new(lambda, margin)? }))
}

pub struct AldrKlLoss {
    pub params: AldrKlParams,
}

impl Loss for AldrKlLoss {
    fn name(&self) -> &'static str {
        "aldr-kl"
    }

    /// Stateless evaluation solves the inner maximization exactly; the
    /// gradient is the envelope gradient at the maximizer.
    fn evaluate(&self, f: &[f64], y: usize) -> Result<LossGrad> {
        let out = crate::ldr::aldr_kl_exact(f, y, &self.params)?;
        let mut grad = out.p_star;
        grad[y] -= 1.0;
        Ok(LossGrad { value: out.value, grad })
    }

    fn wants_logit_normalization(&self) -> bool {
        true
    }

    fn adaptive(&self) -> Option<&dyn AdaptiveLoss> {
        Some(self)
    }
}

impl AdaptiveLoss for AldrKlLoss {
    fn lambda_init(&self) -> f64 {
        self.params.lambda0
    }

    fn step(&self, f: &[f64], y: usize, lambda_prev: f64) -> Result<crate::ldr::AldrStep> {
        crate::ldr::aldr_kl_step(f, y, lambda_prev, &self.params)
    }
}

fn build_aldr_kl(params: &LossParams) -> Result<Box<dyn Loss>> {
    params.check_keys("aldr-kl", &["lambda0", "alpha", "k_classes", "c"])?;
    let lambda0 = params.require("lambda0", "aldr-kl")?;
    let margin = margin_from(params, DEFAULT_MARGIN)?;
    // alpha defaults to 2 log K / lambda0 when the class count is provided
    let aldr = match (params.get("alpha"), params.get("k_classes")) {
        (Some(alpha), _) => AldrKlParams::new(lambda0, alpha, margin)?,
        (None, Some(k)) => AldrKlParams::with_default_alpha(lambda0, k as usize, margin)?,
        (None, None) => {
            return Err(Error::config(
                "aldr-kl needs either 'alpha' or 'k_classes' (for alpha = 2 log K / lambda0)",
            ))
        }
    };
    Ok(Box::new(AldrKlLoss { params: aldr }))
}

fn build_ldr_k_kl(params: &LossParams) -> Result<Box<dyn Loss>> {
    params.check_keys("ldr-k-kl", &["lambda", "k", "c"])?;
    let lambda = params.require("lambda", "ldr-k-kl")?;
    let k = params.require("k", "ldr-k-kl")? as usize;
    let margin = margin_from(params, DEFAULT_MARGIN)?;
    Ok(Box::new(crate::topk::LdrKKlLoss::new(lambda, k, margin)?))
}

fn build_topk_svm(params: &LossParams) -> Result<Box<dyn Loss>> {
    params.check_keys("topk-svm", &["k", "c"])?;
    let k = params.require("k", "topk-svm")? as usize;
    let margin = margin_from(params, DEFAULT_MARGIN)?;
    Ok(Box::new(crate::topk::TopkSvmLoss::new(k, margin)))
}
