//! Two-layer ReLU perceptron with manual backpropagation and the
//! L1 logit normalization `g = f * K / ||f||_1` used by the LDR family.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

/// Normalization bypass threshold for degenerate logits.
const NORM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct MlpModel {
    /// `h x d`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `k x h`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub d: usize,
    pub h: usize,
    pub k: usize,
}

/// Intermediates retained for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub x: Vec<f64>,
    /// Pre-activation hidden values.
    pub z: Vec<f64>,
    /// Post-ReLU hidden values.
    pub a: Vec<f64>,
    pub logits: Vec<f64>,
    pub normalized: Vec<f64>,
    norm_bypassed: bool,
    normalize: bool,
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpGrads {
    pub fn zeros(model: &MlpModel) -> Self {
        MlpGrads {
            w1: vec![0.0; model.w1.len()],
            b1: vec![0.0; model.b1.len()],
            w2: vec![0.0; model.w2.len()],
            b2: vec![0.0; model.b2.len()],
        }
    }

    pub fn scale(&mut self, s: f64) {
        for buf in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            for v in buf.iter_mut() {
                *v *= s;
            }
        }
    }
}

impl MlpModel {
    /// Kaiming-uniform fan-in init; hidden width defaults to `min(d, k)`.
    pub fn new(d: usize, k: usize, hidden: Option<usize>, rng: &mut impl Rng) -> Self {
        let h = hidden.unwrap_or_else(|| d.min(k)).max(1);
        let mut init = |rows: usize, cols: usize| -> Vec<f64> {
            let bound = (6.0 / cols as f64).sqrt();
            (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect()
        };
        let w1 = init(h, d);
        let w2 = init(k, h);
        let bias = |len: usize, fan_in: usize, rng: &mut dyn rand::RngCore| -> Vec<f64> {
            let bound = 1.0 / (fan_in as f64).sqrt();
            (0..len)
                .map(|_| {
                    let u: f64 = rand::Rng::gen(rng);
                    (2.0 * u - 1.0) * bound
                })
                .collect()
        };
        let b1 = bias(h, d, rng);
        let b2 = bias(k, h, rng);
        MlpModel { w1, b1, w2, b2, d, h, k }
    }

    /// Raw logits `f = W2 relu(W1 x + b1) + b2` and the normalized
    /// logits `g = f * K / ||f||_1` (identity below the epsilon guard).
    pub fn forward(&self, x: &[f64], normalize: bool) -> ForwardCache {
        debug_assert_eq!(x.len(), self.d);
        let mut z = self.b1.clone();
        for i in 0..self.h {
            let row = &self.w1[i * self.d..(i + 1) * self.d];
            z[i] += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        let a: Vec<f64> = z.iter().map(|&v| v.max(0.0)).collect();
        let mut logits = self.b2.clone();
        for i in 0..self.k {
            let row = &self.w2[i * self.h..(i + 1) * self.h];
            logits[i] += row.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>();
        }
        let l1: f64 = logits.iter().map(|v| v.abs()).sum();
        let (normalized, norm_bypassed) = if normalize && l1 > NORM_EPS {
            let scale = self.k as f64 / l1;
            (logits.iter().map(|v| v * scale).collect(), false)
        } else {
            (logits.clone(), true)
        };
        ForwardCache { x: x.to_vec(), z, a, logits, normalized, norm_bypassed, normalize }
    }

    /// Backpropagates `d loss / d normalized-logits` into `grads`.
    pub fn backward(&self, cache: &ForwardCache, dl_dg: &[f64], grads: &mut MlpGrads) {
        debug_assert_eq!(dl_dg.len(), self.k);
        // exact Jacobian of g = f * K/||f||_1
        let dl_df: Vec<f64> = if cache.normalize && !cache.norm_bypassed {
            let l1: f64 = cache.logits.iter().map(|v| v.abs()).sum();
            let scale = self.k as f64 / l1;
            let inner: f64 = cache.normalized.iter().zip(dl_dg).map(|(g, d)| g * d).sum();
            cache
                .logits
                .iter()
                .zip(dl_dg)
                .map(|(&f, &d)| scale * d - f.signum() * inner / l1)
                .collect()
        } else {
            dl_dg.to_vec()
        };

        let mut da = vec![0.0; self.h];
        for i in 0..self.k {
            let gi = dl_df[i];
            grads.b2[i] += gi;
            let row = &mut grads.w2[i * self.h..(i + 1) * self.h];
            for j in 0..self.h {
                row[j] += gi * cache.a[j];
                da[j] += self.w2[i * self.h + j] * gi;
            }
        }
        for j in 0..self.h {
            if cache.z[j] <= 0.0 {
                continue;
            }
            let dz = da[j];
            grads.b1[j] += dz;
            let row = &mut grads.w1[j * self.d..(j + 1) * self.d];
            for (w, &xv) in row.iter_mut().zip(&cache.x) {
                *w += dz * xv;
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.extend_from_slice(&self.b2);
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut at = 0;
        for buf in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            let len = buf.len();
            buf.copy_from_slice(&flat[at..at + len]);
            at += len;
        }
    }

    /// Flat little-endian f64 parameter dump with a shape header.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(b"LDRW")?;
        for v in [self.d as u64, self.h as u64, self.k as u64] {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in self.params_flat() {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<MlpModel> {
        let mut input = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != b"LDRW" {
            return Err(Error::Parse { line: 0, message: "bad checkpoint magic".into() });
        }
        let mut buf = [0u8; 8];
        let mut read_u64 = |input: &mut dyn Read| -> Result<u64> {
            input.read_exact(&mut buf)?;
            Ok(u64::from_le_bytes(buf))
        };
        let d = read_u64(&mut input)? as usize;
        let h = read_u64(&mut input)? as usize;
        let k = read_u64(&mut input)? as usize;
        let mut model = MlpModel {
            w1: vec![0.0; h * d],
            b1: vec![0.0; h],
            w2: vec![0.0; k * h],
            b2: vec![0.0; k],
            d,
            h,
            k,
        };
        let mut flat = vec![0.0; model.param_count()];
        let mut f64buf = [0u8; 8];
        for v in &mut flat {
            input.read_exact(&mut f64buf)?;
            *v = f64::from_le_bytes(f64buf);
        }
        model.set_params_flat(&flat);
        Ok(model)
    }
}

/// Argmax class over a uniform grid, for external plotting.
/// `bounds = (x_min, x_max, y_min, y_max)`; the output has
/// `resolution * resolution` row-major cells.
pub fn decision_grid(
    model: &MlpModel,
    bounds: (f64, f64, f64, f64),
    resolution: usize,
) -> Result<Vec<usize>> {
    if model.d != 2 {
        return Err(Error::config(format!("decision grid needs a 2-D model, got d = {}", model.d)));
    }
    let (x0, x1, y0, y1) = bounds;
    let mut grid = Vec::with_capacity(resolution * resolution);
    for iy in 0..resolution {
        for ix in 0..resolution {
            let x = x0 + (x1 - x0) * ix as f64 / (resolution - 1).max(1) as f64;
            let y = y0 + (y1 - y0) * iy as f64 / (resolution - 1).max(1) as f64;
            let logits = model.forward(&[x, y], false).logits;
            grid.push(crate::ldr::argmax_tie_low(&logits));
        }
    }
    Ok(grid)
}
