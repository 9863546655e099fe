//! Comparison losses: the classic CE/CS/WW trio, the symmetric, bounded
//! and asymmetric robust families, and the NCE+X active/passive
//! combinations. All probability-based losses share one softmax head;
//! CS and WW act on raw scores.

use crate::error::{Error, Result};
use crate::loss::{Loss, LossGrad, LossParams, LossRegistry};
use crate::numerics::tempered_softmax;

/// Floor applied inside logarithms on saturated scores.
const PROB_FLOOR: f64 = 1e-12;

fn softmax_head(f: &[f64]) -> Result<Vec<f64>> {
    tempered_softmax(f, 1.0)
}

/// Chain rule through the softmax head:
/// `d psi/d f_l = p_l (g_l - sum_m g_m p_m)` for `g = d psi/d p`.
fn chain_softmax(p: &[f64], dpsi_dp: &[f64]) -> Vec<f64> {
    let inner: f64 = p.iter().zip(dpsi_dp).map(|(&pi, &gi)| pi * gi).sum();
    p.iter().zip(dpsi_dp).map(|(&pi, &gi)| pi * (gi - inner)).collect()
}

fn check_label(f: &[f64], y: usize) -> Result<()> {
    crate::numerics::ensure_finite(f, "scores")?;
    if y >= f.len() {
        return Err(Error::IndexOutOfRange { index: y, classes: f.len() });
    }
    Ok(())
}

/// Sum of the loss over all K candidate labels; constant in `f` exactly
/// for the symmetric families.
pub fn symmetry_sum(loss: &dyn Loss, f: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for j in 0..f.len() {
        total += loss.evaluate(f, j)?.value;
    }
    Ok(total)
}

pub fn register_all(reg: &mut LossRegistry) {
    reg.register("ce", |p| {
        p.check_keys("ce", &[])?;
        Ok(Box::new(CrossEntropy))
    });
    reg.register("cs", |p| {
        p.check_keys("cs", &["c"])?;
        Ok(Box::new(CrammerSinger::new(p.get_or("c", 1.0))?))
    });
    reg.register("ww", |p| {
        p.check_keys("ww", &["c"])?;
        Ok(Box::new(WestonWatkins::new(p.get_or("c", 1.0))?))
    });
    reg.register("mae", |p| {
        p.check_keys("mae", &[])?;
        Ok(Box::new(MeanAbsoluteError))
    });
    reg.register("nce", |p| {
        p.check_keys("nce", &[])?;
        Ok(Box::new(NormalizedCe))
    });
    reg.register("rll", |p| {
        p.check_keys("rll", &["alpha"])?;
        Ok(Box::new(RobustLogLoss::new(p.get_or("alpha", 1.0))?))
    });
    reg.register("gce", |p| {
        p.check_keys("gce", &["q"])?;
        Ok(Box::new(GeneralizedCe::new(p.get_or("q", 0.7))?))
    });
    reg.register("tgce", |p| {
        p.check_keys("tgce", &["q", "trunc"])?;
        Ok(Box::new(TruncatedGce::new(p.get_or("q", 0.7), p.get_or("trunc", 0.5))?))
    });
    reg.register("sce", |p| {
        p.check_keys("sce", &["alpha", "a"])?;
        Ok(Box::new(SymmetricCe::new(p.get_or("alpha", 0.5), p.get_or("a", -4.0))?))
    });
    reg.register("js", |p| {
        p.check_keys("js", &["pi1"])?;
        Ok(Box::new(JensenShannon::new(p.get_or("pi1", 0.5))?))
    });
    reg.register("mse", |p| {
        p.check_keys("mse", &[])?;
        Ok(Box::new(MeanSquaredError))
    });
    reg.register("agce", |p| {
        p.check_keys("agce", &["a", "q"])?;
        Ok(Box::new(AsymmetricGce::new(p.get_or("a", 1.0), p.get_or("q", 2.0))?))
    });
    reg.register("aul", |p| {
        p.check_keys("aul", &["a", "q"])?;
        Ok(Box::new(AsymmetricUnhinged::new(p.get_or("a", 3.0), p.get_or("q", 2.0))?))
    });
    reg.register("nce+rce", |p| ComboLoss::build(Passive::Rce, p));
    reg.register("nce+agce", |p| ComboLoss::build(Passive::Agce, p));
    reg.register("nce+aul", |p| ComboLoss::build(Passive::Aul, p));
}

// ---- traditional -----------------------------------------------------------

pub struct CrossEntropy;

impl Loss for CrossEntropy {
    fn name(&self) -> &'static str {
        "ce"
    }

    fn evaluate(&self, f: &[f64], y: usize) -> Result<LossGrad> {
        check_label(f, y)?;
        let p = softmax_head(f)?;
        let value = -p[y].max(PROB_FLOOR).ln();
        let mut grad = p;
        grad[y] -= 1.0;
        Ok(LossGrad { value, grad })
    }
}

pub struct CrammerSinger {
    pub c: f64,
}

impl CrammerSinger {
    pub fn new(c: f64) -> Result<Self> {
        if !(c >= 0.0) {
            return Err(Error::config(format!("cs margin must be >= 0, got {c}")));
        }
        Ok(CrammerSinger { c })
    }
}

impl Loss for CrammerSinger {
    fn name(&self) -> &'static str {
        "cs"
    }

    fn evaluate(&self, f: &[f64], y: usize) -> Result<LossGrad> {
        check_label(f, y)?;
        let mut best: Option<usize> = None;
        for (k, &v) in f.iter().enumerate() {
            if k == y {
                continue;
            }
            if best.map_or(true, |b| v > f[b]) {
                best = Some(k);
            }
        }
        let mut grad = vec![0.0; f.len()];
        let value = match best {
            Some(k) => {
                let v = f[k] - f[y] + self.c;
                if v > 0.0 {
                    grad[k] = 1.0;
                    grad[y] = -1.0;
                    v
                } else {
                    0.0
                }
            }
            None => 0.0,
        };
        Ok(LossGrad { value, grad })
    }
}

pub struct WestonWatkins {
    pub c: f64,
}

impl WestonWatkins {
    pub fn new(c: f64) -> Result<Self> {
        if !(c >= 0.0) {
            return Err(Error::config(format!("ww margin must be >= 0, got {c}")));
        }
        Ok(WestonWatkins { c })
    }
}

impl Loss for WestonWatkins {
    fn name(&self) -> &'static str {
        "ww"
    }

    fn evaluate(&self, f: &[f64], y: usize) -> Result<LossGrad> {
        check_label(f, y)?;
        let mut value = 0.0;
        let mut grad = vec![0.0; f.len()];
        for (k, &v) in f.iter().enumerate() {
            if k == y {
                continue;
            }
            let margin = v - f[y] + self.c;
            if margin > 0.0 {
                value += margin;
                grad[k] += 1.0;
                grad[y] -= 1.0;
            }
        }
        Ok(LossGrad { value, grad })
    }
}

// ---- symmetric -------------------------------------------------------------

pub struct MeanAbsoluteError;

impl Loss for MeanAbsoluteError {
    fn name(&self) -> &'static str {
        "mae"
    }

    fn evaluate(&self, f: &[f64], y: usize) -> Result<LossGrad> {
        check_label(f, y)?;
        let p = softmax_head(f)?;
        let value = 2.0 * (1.0 - p[y]);
        let mut dpsi_dp = vec![0.0; f.len()];
        dpsi_dp[y] = -2.0;
        let grad = chain_softmax(&p, &dpsi_dp);
        Ok(LossGrad { value, grad })
    }
}

pub struct NormalizedCe;

impl Loss for NormalizedCe {
    fn name(&self) -> &'static str {
        "nce"
    }

    fn evaluate(&self, f: &[f64], y: usize) -> Result<LossGrad> {
        check_label(f, y)?;
        let p = softmax_head(f)?;
        let logs: Vec<f64> = p.iter().map(|&v| v.max(PROB_FLOOR).ln()).collect();
        let num = logs[y];
        let den: f64 = logs.iter().sum();
        let value = num / den;
        let dpsi_dp: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(i, &pi)| {
                let d_num = if i == y { 1.0 / pi.max(PROB_FLOOR) } else { 0.0 };
                let d_den = 1.0 / pi.max(PROB_FLOOR);
                (d_num * den - num * d_den) / (den * den)
            })
            .collect();
        let grad = chain_softmax(&p, &dpsi_dp);
        Ok(LossGrad { value, grad })
    }
}

pub struct RobustLogLoss {
    pub alpha: f64,
}

impl RobustLogLoss {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::config(format!("rll alpha must be > 0, got {alpha}")));
        }
        Ok(RobustLogLoss { alpha })
    }
}

impl Loss for RobustLogLoss {
    fn name(&self) -> &'static str {
        "rll"
    }

    fn evaluate(&self, f: &[f64], y: usize) -> Result<LossGrad> {
        check_label(f, y)?;
        let p = softmax_head(f)?;
        let km1 = (f.len() - 1) as f64;
        let mut value = -(self.alpha + p[y]).ln();
        let mut dpsi_dp = vec![0.0; f.len()];
        dpsi_dp[y] = -1.0 / (self.alpha + p[y]);
        for (i, &pi) in p.iter().enumerate() {
            if i != y {
                value += (self.alpha + pi).ln() / km1;
                dpsi_dp[i] = 1.0 / (km1 * (self.alpha + pi));
            }
        }
        let grad = chain_softmax(&p, &dpsi_dp);
        Ok(LossGrad { value, grad })
    }
}

// ---- CE/MAE interpolations --------------------------------------------------

pub struct GeneralizedCe {
    pub q: f64,
}

impl GeneralizedCe {
    pub fn new(q: f64) -> Result<Self> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::config(format!("gce q must lie in (0, 1], got {q}")));
        }
        Ok(GeneralizedCe { q })
    }
}

impl Loss for GeneralizedCe {
    fn name(&self) -> &'static str {
        "gce"
    }

    fn evaluate(&self, f: &[f64], y: usize) -> Result<LossGrad> {
        check_label(f, y)?;
        let p = softmax_head(f)?;
        let value = (1.0 - p[y].powf(self.q)) / self.q;
        let mut dpsi_dp = vec![0.0; f.len()];
        dpsi_dp[y] = -p[y].max(PROB_FLOOR).powf(self.q - 1.0);
        let grad = chain_softmax(&p, &dpsi_dp);
        Ok(LossGrad { value, grad })
    }
}

pub struct SymmetricCe {
    pub alpha: f64,
    /// The negative constant standing in for `log 0` in reverse CE.
    pub a: f64,
}

impl SymmetricCe {
    pub fn new(alpha: f64, a: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::config(format!("sce alpha must lie in [0, 1], got {alpha}")));
        }
        if !(a < 0.0) {
            return Err(Error::config(format!("sce A must be negative, got {a}")));
        }
        Ok(SymmetricCe { alpha, a })
    }
}

impl Loss for SymmetricCe {
    fn name(&self) -> &'static str {
        "sce"
    }

    fn evaluate(&self, f: &[f64], y: usize) -> Result<LossGrad> {
        let ce = CrossEntropy.evaluate(f, y)?;
        let mae = MeanAbsoluteError.evaluate(f, y)?;
        let w = -(1.0 - self.alpha) * self.a / 2.0;
        let value = self.alpha * ce.value + w * mae.value;
        let grad = ce
            .grad
            .iter()
            .zip(&mae.grad)
            .map(|(&g1, &g2)| self.alpha * g1 + w * g2)
            .collect();
        Ok(LossGrad { value, grad })
    }
}

pub struct JensenShannon {
    pub pi1: f64,
}

impl JensenShannon {
    pub fn new(pi1: f64) -> Result<Self> {
        if !(pi1 > 0.0 && pi1 < 1.0) {
            return Err(Error::config(format!("js pi1 must lie in (0, 1), got {pi1}")));
        }
        Ok(JensenShannon { pi1 })
    }
}

impl Loss for JensenShannon {
    fn name(&self) -> &'static str {
        "js"
    }

    fn evaluate(&self, f: &[f64], y: usize) -> Result<LossGrad> {
        check_label(f, y)?;
        let p = softmax_head(f)?;
        let pi1 = self.pi1;
        let w = 1.0 - pi1;
        // normalizer chosen so the loss approaches CE as pi1 -> 0
        let z = -w * w.ln();
        let m: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(i, &pi)| if i == y { pi1 + w * pi } else { w * pi })
            .collect();
        let kl_label = -m[y].max(PROB_FLOOR).ln();
        let mut kl_pred = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            if pi > 0.0 {
                kl_pred += pi * (pi.max(PROB_FLOOR).ln() - m[i].max(PROB_FLOOR).ln());
            }
        }
        let value = (pi1 * kl_label + w * kl_pred) / z;
        let dpsi_dp: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(j, &pj)| {
                let mut g = 0.0;
                if j == y {
                    g -= pi1 * w / m[y].max(PROB_FLOOR);
                }
                g += w * ((pj.max(PROB_FLOOR) / m[j].max(PROB_FLOOR)).ln() + 1.0
                    - w * pj / m[j].max(PROB_FLOOR));
                g / z
            })
            .collect();
        let grad = chain_softmax(&p, &dpsi_dp);
        Ok(LossGrad { value, grad })
    }
}

// ---- bounded ---------------------------------------------------------------

pub struct MeanSquaredError;

impl Loss for MeanSquaredError {
    fn name(&self) -> &'static str {
        "mse"
    }

    fn evaluate(&self, f: &[f64], y: usize) -> Result<LossGrad> {
        check_label(f, y)?;
        let p = softmax_head(f)?;
        let norm_sq: f64 = p.iter().map(|v| v * v).sum();
        let value = 1.0 - 2.0 * p[y] + norm_sq;
        let dpsi_dp: Vec<f64> = p
            .iter()
            .enumerate()
            .map(|(i, &pi)| 2.0 * pi - if i == y { 2.0 } else { 0.0 })
            .collect();
        let grad = chain_softmax(&p, &dpsi_dp);
        Ok(LossGrad { value, grad })
    }
}

pub struct TruncatedGce {
    pub q: f64,
    pub trunc: f64,
}

impl TruncatedGce {
    pub fn new(q: f64, trunc: f64) -> Result<Self> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::config(format!("tgce q must lie in (0, 1], got {q}")));
        }
        if !(trunc > 0.0 && trunc < 1.0) {
            return Err(Error::config(format!("tgce trunc must lie in (0, 1), got {trunc}")));
        }
        Ok(TruncatedGce { q, trunc })
    }
}

impl Loss for TruncatedGce {
    fn name(&self) -> &'static str {
        "tgce"
    }

    fn evaluate(&self, f: &[f64], y: usize) -> Result<LossGrad> {
        check_label(f, y)?;
        let p = softmax_head(f)?;
        if p[y] > self.trunc {
            let value = (1.0 - p[y].powf(self.q)) / self.q;
            let mut dpsi_dp = vec![0.0; f.len()];
            dpsi_dp[y] = -p[y].powf(self.q - 1.0);
            let grad = chain_softmax(&p, &dpsi_dp);
            Ok(LossGrad { value, grad })
        } else {
            // truncated region: constant loss, zero gradient
            let value = (1.0 - self.trunc.powf(self.q)) / self.q;
            Ok(LossGrad { value, grad: vec![0.0; f.len()] })
        }
    }
}

// ---- asymmetric ------------------------------------------------------------

pub struct AsymmetricGce {
    pub a: f64,
    pub q: f64,
}

impl AsymmetricGce {
    pub fn new(a: f64, q: f64) -> Result<Self> {
        if !(a > 0.0) || !(q > 0.0) {
            return Err(Error::config(format!("agce requires a > 0 and q > 0, got a={a}, q={q}")));
        }
        Ok(AsymmetricGce { a, q })
    }
}

impl Loss for AsymmetricGce {
    fn name(&self) -> &'static str {
        "agce"
    }

    fn evaluate(&self, f: &[f64], y: usize) -> Result<LossGrad> {
        check_label(f, y)?;
        let p = softmax_head(f)?;
        let value = ((self.a + 1.0).powf(self.q) - (self.a + p[y]).powf(self.q)) / self.q;
        let mut dpsi_dp = vec![0.0; f.len()];
        dpsi_dp[y] = -(self.a + p[y]).powf(self.q - 1.0);
        let grad = chain_softmax(&p, &dpsi_dp);
        Ok(LossGrad { value, grad })
    }
}

pub struct AsymmetricUnhinged {
    pub a: f64,
    pub q: f64,
}

impl AsymmetricUnhinged {
    pub fn new(a: f64, q: f64) -> Result<Self> {
        if !(a > 1.0) || !(q > 0.0) {
            return Err(Error::config(format!("aul requires a > 1 and q > 0, got a={a}, q={q}")));
        }
        Ok(AsymmetricUnhinged { a, q })
    }
}

impl Loss for AsymmetricUnhinged {
    fn name(&self) -> &'static str {
        "aul"
    }

    fn evaluate(&self, f: &[f64], y: usize) -> Result<LossGrad> {
        check_label(f, y)?;
        let p = softmax_head(f)?;
        let value = ((self.a - p[y]).powf(self.q) - (self.a - 1.0).powf(self.q)) / self.q;
        let mut dpsi_dp = vec![0.0; f.len()];
        dpsi_dp[y] = -(self.a - p[y]).powf(self.q - 1.0);
        let grad = chain_softmax(&p, &dpsi_dp);
        Ok(LossGrad { value, grad })
    }
}

// ---- active/passive combinations --------------------------------------------

#[derive(Clone, Copy)]
pub enum Passive {
    /// Reverse CE, the MAE form scaled by -A/2 with the A = -4 convention.
    Rce,
    Agce,
    Aul,
}

pub struct ComboLoss {
    pub active_weight: f64,
    pub passive_weight: f64,
    passive: Passive,
    agce: AsymmetricGce,
    aul: AsymmetricUnhinged,
}

impl ComboLoss {
    fn build(passive: Passive, params: &LossParams) -> Result<Box<dyn Loss>> {
        let name = match passive {
            Passive::Rce => "nce+rce",
            Passive::Agce => "nce+agce",
            Passive::Aul => "nce+aul",
        };
        params.check_keys(name, &["alpha", "beta", "a", "q"])?;
        let active_weight = params.get_or("alpha", 5.0);
        let passive_weight = params.get_or("beta", 5.0);
        if !(active_weight >= 0.0) || !(passive_weight >= 0.0) {
            return Err(Error::config(format!("{name} weights must be >= 0")));
        }
        Ok(Box::new(ComboLoss {
            active_weight,
            passive_weight,
            passive,
            agce: AsymmetricGce::new(params.get_or("a", 1.0), params.get_or("q", 2.0))?,
            aul: AsymmetricUnhinged::new(params.get_or("a", 3.0), params.get_or("q", 2.0))?,
        }))
    }
}

impl Loss for ComboLoss {
    fn name(&self) -> &'static str {
        match self.passive {
            Passive::Rce => "nce+rce",
            Passive::Agce => "nce+agce",
            Passive::Aul => "nce+aul",
        }
    }

    fn evaluate(&self, f: &[f64], y: usize) -> Result<LossGrad> {
        let active = NormalizedCe.evaluate(f, y)?;
        let (mut passive, scale) = match self.passive {
            Passive::Rce => (MeanAbsoluteError.evaluate(f, y)?, 2.0),
            Passive::Agce => (self.agce.evaluate(f, y)?, 1.0),
            Passive::Aul => (self.aul.evaluate(f, y)?, 1.0),
        };
        passive.value *= scale;
        let value = self.active_weight * active.value + self.passive_weight * passive.value;
        let grad = active
            .grad
            .iter()
            .zip(&passive.grad)
            .map(|(&ga, &gp)| self.active_weight * ga + self.passive_weight * scale * gp)
            .collect();
        Ok(LossGrad { value, grad })
    }
}
