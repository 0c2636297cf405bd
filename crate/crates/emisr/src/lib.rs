//! Super-resolution of gridded emission maps with domain adaptation.
//!
//! The pipeline estimates a fine-grid emission map from a coarse one (×2
//! upscale) as `invert(T) ∘ N ∘ T`, where `T` is an invertible quantile
//! transform fitted on a data pool and `N` is a small residual
//! channel-attention network trained from scratch. Two adaptation
//! strategies bridge the gap between a simulated source domain and an
//! observed target domain:
//!
//! - **data-transformation adaptation**: refit `T` on a (possibly tiny)
//!   pool of target-domain patches while keeping `N` frozen;
//! - **network-operator adaptation**: fine-tune `N` on a fixed-budget
//!   training set containing an injected fraction of target-domain patches.
//!
//! Module map:
//!
//! - [`grid`] — emission maps, patch slicing, the EMG binary format
//! - [`dataset`] — manifests, train/val/test split policies, patch loading
//! - [`resample`] — Keys bicubic downsampling/upsampling
//! - [`transform`] — invertible quantile normalization
//! - [`net`] — the SR network: tensors, layers, exact gradients, checkpoints
//! - [`train`] — loss, Adam, training/fine-tuning loops, injection sets
//! - [`metrics`] — NMSE (dB) and SSIM with dataset-level pooling
//! - [`synth`] — seeded two-domain synthetic dataset generator
//! - [`harness`] — experiment scenarios, sweeps, CSV reports

pub mod dataset;
pub mod error;
pub mod grid;
pub mod harness;
pub mod metrics;
pub mod net;
pub mod resample;
pub mod synth;
pub mod train;
pub mod transform;

pub use error::{Error, Result};
