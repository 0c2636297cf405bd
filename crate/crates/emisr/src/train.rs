//! Optimization harness: loss functions, Adam, the training and
//! fine-tuning loops with early stopping, target-domain injection sets,
//! and the end-to-end super-resolution entry point.
//!
//! Training runs entirely in transformed space: the configured quantile
//! transform is applied to both the LR inputs and the HR targets, the
//! loss is computed there, and only validation metrics go back through
//! the inverse transform so model selection happens in original units.
//! Everything is seeded and single-threaded, so equal seeds and configs
//! reproduce bit-identical histories and checkpoints.

use std::fs;
use std::path::Path;

use rand::seq::index::sample as index_sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{PatchPair, SCALE};
use crate::metrics::{dataset_nmse_db, ssim, SSIM_WINDOW};
use crate::net::{Checkpoint, Provenance, Scalar, SrNetwork, Tensor};
use crate::transform::QuantileTransform;

/// Exponential decay of the Adam first moment.
pub const ADAM_BETA1: f64 = 0.9;
/// Exponential decay of the Adam second moment.
pub const ADAM_BETA2: f64 = 0.999;
/// Adam denominator stabilizer.
pub const ADAM_EPS: f64 = 1e-8;

/// Inference batch size used when super-resolving patch lists.
const INFER_BATCH: usize = 64;

/// Training loss computed in transformed space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LossKind {
    /// Mean absolute error (subgradient 0 at exact ties).
    #[default]
    L1,
    /// Mean squared error.
    L2,
}

impl LossKind {
    pub fn label(&self) -> &'static str {
        match self {
            LossKind::L1 => "l1",
            LossKind::L2 => "l2",
        }
    }

    pub fn parse_label(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(LossKind::L1),
            "l2" => Ok(LossKind::L2),
            _ => Err(Error::Config(format!("unknown loss kind `{s}`"))),
        }
    }
}

/// Hyperparameters shared by training and fine-tuning.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch_size: usize,
    /// Learning rate for training from scratch.
    pub learning_rate: f64,
    /// Learning rate used by `fine_tune`.
    pub fine_tune_lr: f64,
    pub loss: LossKind,
    /// Epochs without validation improvement before early stop.
    pub patience: u32,
    pub seed: u64,
    /// Exclude empty-flagged patches from the training set (they carry
    /// almost no signal and destabilize the loss scale).
    pub drop_empty_patches: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-4,
            fine_tune_lr: 1e-5,
            loss: LossKind::L1,
            patience: 10,
            seed: 0,
            drop_empty_patches: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("fine_tune_lr", self.fine_tune_lr),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.patience > self.epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds epochs {}",
                self.patience, self.epochs
            )));
        }
        Ok(())
    }
}

/// One history row per completed epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRow {
    pub epoch: u32,
    /// Mean training loss over the epoch (transformed space).
    pub train_loss: f64,
    /// Validation NMSE in original space, dB.
    pub val_nmse_db: f64,
    /// Mean validation SSIM in original space (NaN when patches are
    /// smaller than the SSIM window or the references are constant).
    pub val_ssim: f64,
    /// Learning rate in effect this epoch.
    pub lr: f64,
}

/// Header of the training-history CSV.
pub const HISTORY_HEADER: &str = "epoch,train_loss,val_nmse_db,val_ssim,lr";

/// Write history rows as CSV (floats in shortest round-trip form; −∞
/// serializes as `-inf`).
pub fn write_history_csv(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    let mut out = String::from(HISTORY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.train_loss, r.val_nmse_db, r.val_ssim, r.lr
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read a history CSV written by [`write_history_csv`].
pub fn read_history_csv(path: &Path) -> Result<Vec<HistoryRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == HISTORY_HEADER => {}
        other => {
            return Err(Error::format(
                path,
                format!("bad history header: {:?}", other.map(|(_, h)| h)),
            ))
        }
    }
    let mut rows = Vec::new();
    for (ln, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::format(
                path,
                format!("line {}: expected 5 fields, got {}", ln + 1, fields.len()),
            ));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::format(path, format!("line {}: bad number `{s}`", ln + 1)))
        };
        rows.push(HistoryRow {
            epoch: fields[0].parse().map_err(|_| {
                Error::format(path, format!("line {}: bad epoch `{}`", ln + 1, fields[0]))
            })?,
            train_loss: num(fields[1])?,
            val_nmse_db: num(fields[2])?,
            val_ssim: num(fields[3])?,
            lr: num(fields[4])?,
        });
    }
    Ok(rows)
}

/// Loss and its gradient with respect to `pred`, both over the flat mean.
pub fn loss_value<T: Scalar>(
    pred: &Tensor<T>,
    target: &Tensor<T>,
    kind: LossKind,
) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "loss shapes differ: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.numel() as f64;
    let inv_n = T::from_f64(1.0 / n);
    let mut grad = Tensor::zeros(pred.shape());
    let mut acc = 0.0f64;
    let g = grad.data_mut();
    for (i, (p, t)) in pred.data().iter().zip(target.data()).enumerate() {
        let d = *p - *t;
        match kind {
            LossKind::L1 => {
                acc += Scalar::as_f64(d).abs();
                g[i] = if d > T::zero() {
                    inv_n
                } else if d < T::zero() {
                    -inv_n
                } else {
                    T::zero()
                };
            }
            LossKind::L2 => {
                acc += Scalar::as_f64(d) * Scalar::as_f64(d);
                g[i] = T::from_f64(2.0) * d * inv_n;
            }
        }
    }
    Ok((acc / n, grad))
}

/// Adam moment estimates for one parameter list.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update over every parameter tensor.
pub fn adam_step<T: Scalar>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam_step over {} params, {} grads, {} moment tensors",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let b1 = T::from_f64(ADAM_BETA1);
    let b2 = T::from_f64(ADAM_BETA2);
    let one_minus_b1 = T::from_f64(1.0 - ADAM_BETA1);
    let one_minus_b2 = T::from_f64(1.0 - ADAM_BETA2);
    // Bias corrections folded into a single step size per Adam step.
    let c1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    let step = T::from_f64(lr / c1);
    let denom_scale = T::from_f64(1.0 / c2.sqrt());
    let eps = T::from_f64(ADAM_EPS);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::Shape(format!(
                "adam_step param {i}: shape {:?} vs grad {:?}",
                p.shape(),
                g.shape()
            )));
        }
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for ((pv, gv), (mv, vv)) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            *mv = b1 * *mv + one_minus_b1 * *gv;
            *vv = b2 * *vv + one_minus_b2 * *gv * *gv;
            *pv = *pv - step * *mv / ((*vv).sqrt() * denom_scale + eps);
        }
    }
    Ok(())
}

/// Recipe for a fixed-budget training set mixing source- and
/// target-domain patches.
#[derive(Clone, Copy, Debug)]
pub struct InjectionConfig<'a> {
    /// Fraction p of the budget drawn from the target pool.
    pub fraction: f64,
    /// Total training-set size N, identical for every p in a sweep.
    pub total_budget: usize,
    pub source_pool: &'a [PatchPair],
    pub target_pool: &'a [PatchPair],
    pub seed: u64,
}

/// Draw round(p·N) target patches and N − round(p·N) source patches,
/// each uniformly without replacement, and shuffle their order.
pub fn build_injection_set(cfg: &InjectionConfig) -> Result<Vec<PatchPair>> {
    if !(0.0..=1.0).contains(&cfg.fraction) || !cfg.fraction.is_finite() {
        return Err(Error::Config(format!(
            "injection fraction must lie in [0,1], got {}",
            cfg.fraction
        )));
    }
    if cfg.total_budget == 0 {
        return Err(Error::Config("injection budget must be at least 1".into()));
    }
    let n = cfg.total_budget;
    let k = (cfg.fraction * n as f64).round() as usize;
    if k > cfg.target_pool.len() {
        return Err(Error::Config(format!(
            "target pool has {} patches, need {k} for fraction {}",
            cfg.target_pool.len(),
            cfg.fraction
        )));
    }
    if n - k > cfg.source_pool.len() {
        return Err(Error::Config(format!(
            "source pool has {} patches, need {} for fraction {}",
            cfg.source_pool.len(),
            n - k,
            cfg.fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut set = Vec::with_capacity(n);
    for i in index_sample(&mut rng, cfg.target_pool.len(), k).iter() {
        set.push(cfg.target_pool[i].clone());
    }
    for i in index_sample(&mut rng, cfg.source_pool.len(), n - k).iter() {
        set.push(cfg.source_pool[i].clone());
    }
    set.shuffle(&mut rng);
    Ok(set)
}

/// Train from the given starting checkpoint, keeping its provenance.
///
/// Per epoch: shuffle under the run seed, apply the transform to the LR
/// inputs and HR targets of each batch, forward, loss in transformed
/// space, Adam update; then score validation NMSE in original space via
/// the inverse transform. The best-validation parameters are returned,
/// with `epoch` recording the epoch that achieved them; training stops
/// early after `patience` epochs without improvement.
pub fn train(
    config: &TrainConfig,
    train_pairs: &[PatchPair],
    val_pairs: &[PatchPair],
    transform: &QuantileTransform,
    init: &Checkpoint,
) -> Result<(Checkpoint, Vec<HistoryRow>)> {
    config.validate()?;
    if config.epochs == 0 {
        return Ok((init.clone(), Vec::new()));
    }
    let net = init.to_network::<f32>()?;
    let (best, best_epoch, history) = run_loop(
        config,
        config.learning_rate,
        net,
        train_pairs,
        val_pairs,
        transform,
    )?;
    let ckpt = Checkpoint::from_network(&best, init.provenance, config.seed, best_epoch);
    Ok((ckpt, history))
}

/// Fine-tune a source-trained checkpoint on an injection set at
/// `fine_tune_lr`; the result's provenance records the injected fraction.
pub fn fine_tune(
    config: &TrainConfig,
    base: &Checkpoint,
    injection_pairs: &[PatchPair],
    val_pairs: &[PatchPair],
    transform: &QuantileTransform,
    fraction: f64,
) -> Result<(Checkpoint, Vec<HistoryRow>)> {
    config.validate()?;
    match base.provenance {
        Provenance::TrainedOnS | Provenance::TrainedOnST => {}
        other => {
            return Err(Error::Config(format!(
                "fine_tune base must be source-trained, got {}",
                other.label()
            )))
        }
    }
    if !(0.0..=1.0).contains(&fraction) || !fraction.is_finite() {
        return Err(Error::Config(format!(
            "injected fraction must lie in [0,1], got {fraction}"
        )));
    }
    let provenance = Provenance::FineTunedDA(fraction as f32);
    if config.epochs == 0 {
        let mut ckpt = base.clone();
        ckpt.provenance = provenance;
        ckpt.train_seed = config.seed;
        ckpt.epoch = 0;
        return Ok((ckpt, Vec::new()));
    }
    let net = base.to_network::<f32>()?;
    let (best, best_epoch, history) = run_loop(
        config,
        config.fine_tune_lr,
        net,
        injection_pairs,
        val_pairs,
        transform,
    )?;
    let ckpt = Checkpoint::from_network(&best, provenance, config.seed, best_epoch);
    Ok((ckpt, history))
}

/// Super-resolve LR patches: forward transform, network, inverse
/// transform, clamp to physical non-negativity. `transform_in` and
/// `transform_out` are the single configured transform of the pipeline;
/// they must at least agree on the network's operating codomain.
pub fn super_resolve(
    checkpoint: &Checkpoint,
    transform_in: &QuantileTransform,
    transform_out: &QuantileTransform,
    lr_patches: &[Vec<f32>],
    lr_size: usize,
) -> Result<Vec<Vec<f32>>> {
    if transform_in.target != transform_out.target {
        return Err(Error::Config(format!(
            "transform mismatch: network input is {} but output would invert {}",
            transform_in.target.label(),
            transform_out.target.label()
        )));
    }
    let net = checkpoint.to_network::<f32>()?;
    infer(&net, transform_in, transform_out, lr_patches, lr_size)
}

/// Batched inference shared by `super_resolve` and validation scoring.
fn infer(
    net: &SrNetwork<f32>,
    transform_in: &QuantileTransform,
    transform_out: &QuantileTransform,
    lr_patches: &[Vec<f32>],
    lr_size: usize,
) -> Result<Vec<Vec<f32>>> {
    let hr_size = lr_size * SCALE;
    let mut out = Vec::with_capacity(lr_patches.len());
    for chunk in lr_patches.chunks(INFER_BATCH) {
        let b = chunk.len();
        let mut input = Tensor::zeros([b, 1, lr_size, lr_size]);
        for (i, patch) in chunk.iter().enumerate() {
            if patch.len() != lr_size * lr_size {
                return Err(Error::Shape(format!(
                    "LR patch has {} values, expected {}",
                    patch.len(),
                    lr_size * lr_size
                )));
            }
            let z = transform_in.apply_slice(patch)?;
            input.plane_mut(i, 0).copy_from_slice(&z);
        }
        let pred = net.forward(&input)?;
        for i in 0..b {
            let mut hr = transform_out.invert_slice(pred.plane(i, 0))?;
            for v in &mut hr {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            debug_assert_eq!(hr.len(), hr_size * hr_size);
            out.push(hr);
        }
    }
    Ok(out)
}

/// The shared epoch loop. Returns the best-validation network, the epoch
/// that produced it, and the full history.
fn run_loop(
    config: &TrainConfig,
    lr: f64,
    mut net: SrNetwork<f32>,
    train_pairs: &[PatchPair],
    val_pairs: &[PatchPair],
    transform: &QuantileTransform,
) -> Result<(SrNetwork<f32>, u32, Vec<HistoryRow>)> {
    if val_pairs.is_empty() {
        return Err(Error::Data("validation set is empty".into()));
    }
    let kept: Vec<&PatchPair> = train_pairs
        .iter()
        .filter(|p| !(config.drop_empty_patches && p.empty))
        .collect();
    if kept.is_empty() {
        return Err(Error::Data(
            "training set is empty (all patches empty-flagged?)".into(),
        ));
    }
    let hr_size = kept[0].hr_size;
    if kept.iter().any(|p| p.hr_size != hr_size) {
        return Err(Error::Shape("mixed patch sizes in training set".into()));
    }
    let lr_size = hr_size / SCALE;

    // Transform every patch once up front; batches just gather slices.
    let mut inputs = Vec::with_capacity(kept.len());
    let mut targets = Vec::with_capacity(kept.len());
    for p in &kept {
        inputs.push(transform.apply_slice(&p.lr)?);
        targets.push(transform.apply_slice(&p.hr)?);
    }
    let val_hr_size = val_pairs[0].hr_size;
    if val_pairs.iter().any(|p| p.hr_size != val_hr_size) {
        return Err(Error::Shape("mixed patch sizes in validation set".into()));
    }
    let val_inputs: Vec<Vec<f32>> = val_pairs.iter().map(|p| p.lr.clone()).collect();
    let val_refs: Vec<Vec<f64>> = val_pairs
        .iter()
        .map(|p| p.hr.iter().map(|v| *v as f64).collect())
        .collect();
    let (val_lo, val_hi) = val_refs
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    let val_range = val_hi - val_lo;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(&net.params);
    let mut order: Vec<usize> = (0..kept.len()).collect();
    let mut best_net = net.clone();
    let mut best_epoch = 0u32;
    let mut best_val = f64::INFINITY;
    let mut stale = 0u32;
    let mut history = Vec::new();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        for (bi, batch) in order.chunks(config.batch_size).enumerate() {
            let b = batch.len();
            let mut input = Tensor::zeros([b, 1, lr_size, lr_size]);
            let mut target = Tensor::zeros([b, 1, hr_size, hr_size]);
            for (row, &idx) in batch.iter().enumerate() {
                input.plane_mut(row, 0).copy_from_slice(&inputs[idx]);
                target.plane_mut(row, 0).copy_from_slice(&targets[idx]);
            }
            let (pred, trace) = net.forward_traced(&input)?;
            let (loss, grad_out) = loss_value(&pred, &target, config.loss)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch: epoch as usize,
                    batch: bi,
                });
            }
            loss_sum += loss * b as f64;
            let (grads, _) = net.backward(&trace, &grad_out)?;
            adam_step(&mut net.params, &grads, &mut adam, lr)?;
        }
        let train_loss = loss_sum / kept.len() as f64;

        // Validation in original space through the inverse transform.
        let estimates = infer(&net, transform, transform, &val_inputs, val_hr_size / SCALE)?;
        let est_f64: Vec<Vec<f64>> = estimates
            .iter()
            .map(|e| e.iter().map(|v| *v as f64).collect())
            .collect();
        let pairs: Vec<(&[f64], &[f64])> = val_refs
            .iter()
            .zip(&est_f64)
            .map(|(r, e)| (r.as_slice(), e.as_slice()))
            .collect();
        let val_nmse = dataset_nmse_db(&pairs)?;
        let val_ssim = if val_hr_size >= SSIM_WINDOW && val_range > 0.0 {
            let mut acc = 0.0;
            for (r, e) in val_refs.iter().zip(&est_f64) {
                acc += ssim(r, e, val_hr_size, val_hr_size, val_range)?;
            }
            acc / val_refs.len() as f64
        } else {
            f64::NAN
        };
        history.push(HistoryRow {
            epoch,
            train_loss,
            val_nmse_db: val_nmse,
            val_ssim,
            lr,
        });

        if val_nmse < best_val {
            best_val = val_nmse;
            best_net = net.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    Ok((best_net, best_epoch, history))
}
