//! Label-distributionally-robust multi-class losses and a noisy-label
//! benchmark harness.
//!
//! The crate is organized as a strategy registry: every loss variant
//! (LDR-KL with its extreme cases, adaptive ALDR-KL, the capped-simplex
//! LDR-k-KL, the top-k SVM hinge and the comparison families) implements
//! [`loss::Loss`] and is built by name from [`loss::LossRegistry`].
//! Around the losses sit the numeric kernels, a conditional-risk
//! calibration lab, the data pipeline with label-noise injection, a
//! from-scratch MLP trainer with the per-sample adaptive temperature
//! loop, and top-k metrics with rank-leaderboard aggregation.

pub mod baselines;
pub mod bench;
pub mod calibration;
pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod ldr;
pub mod loss;
pub mod metrics;
pub mod mlp;
pub mod numerics;
pub mod synth;
pub mod topk;
pub mod trainer;

pub use error::{Error, Result};
pub use loss::{Loss, LossGrad, LossParams, LossRegistry};
