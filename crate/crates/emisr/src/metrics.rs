//! Image-quality metrics: NMSE in dB and SSIM, plus dataset-level
//! aggregation used by the evaluation harness.
//!
//! NMSE is reported in decibels relative to the reference signal power:
//! 10·log₁₀(mean((ref−est)²) / mean(ref²)).  A zero estimate therefore
//! scores exactly 0 dB and an exact match −∞ (serialized as `-inf`).
//! Dataset-level NMSE pools squared sums over all patches before taking
//! the ratio, which stays well defined on near-empty ocean patches where
//! per-patch dB would diverge.
//!
//! SSIM uses the standard 11×11 Gaussian window (σ = 1.5, K1 = 0.01,
//! K2 = 0.03) evaluated at every fully-interior window position.

use crate::error::{Error, Result};
use crate::grid::{DomainTag, PatchPair, SCALE};
use crate::net::{Checkpoint, Provenance};
use crate::train::super_resolve;
use crate::transform::QuantileTransform;

/// Side length of the SSIM window.
pub const SSIM_WINDOW: usize = 11;
/// Standard deviation of the SSIM Gaussian window.
pub const SSIM_SIGMA: f64 = 1.5;
/// Luminance stabilizer coefficient.
pub const SSIM_K1: f64 = 0.01;
/// Contrast stabilizer coefficient.
pub const SSIM_K2: f64 = 0.03;

/// Metrics for one evaluation run over a test split.
#[derive(Debug, Clone)]
pub struct MetricReport {
    /// Pooled NMSE over all test patches, in dB (−∞ on an exact match).
    pub nmse_db: f64,
    /// Mean SSIM over all test patches.
    pub ssim: f64,
    /// Number of patches evaluated.
    pub n_patches: usize,
    /// Domain of the evaluated patches.
    pub domain: DomainTag,
    /// SSIM data range used (global max − min of the test references).
    pub data_range: f64,
    /// Provenance of the evaluated checkpoint.
    pub provenance: Provenance,
    /// Which value pool the transform was fitted on.
    pub transform_fitted_on: String,
}

/// Super-resolve every test patch through the checkpointed network and
/// the given transform, then score pooled NMSE and mean SSIM against the
/// HR references in original units.
///
/// The SSIM data range is the global max−min of the test references,
/// echoed in the report. Empty-flagged patches are included: the pooled
/// NMSE stays well defined as long as the set carries any signal.
pub fn evaluate(
    checkpoint: &Checkpoint,
    transform: &QuantileTransform,
    test_pairs: &[PatchPair],
) -> Result<MetricReport> {
    if test_pairs.is_empty() {
        return Err(Error::Data("evaluate needs a non-empty test set".into()));
    }
    let hr_size = test_pairs[0].hr_size;
    let domain = test_pairs[0].domain;
    for p in test_pairs {
        if p.hr_size != hr_size {
            return Err(Error::Shape(format!(
                "mixed patch sizes in test set: {} vs {hr_size}",
                p.hr_size
            )));
        }
        if p.domain != domain {
            return Err(Error::Data(format!(
                "mixed domains in test set: {} vs {}",
                p.domain.label(),
                domain.label()
            )));
        }
    }
    let lr_patches: Vec<Vec<f32>> = test_pairs.iter().map(|p| p.lr.clone()).collect();
    let estimates = super_resolve(
        checkpoint,
        transform,
        transform,
        &lr_patches,
        hr_size / SCALE,
    )?;

    let refs: Vec<Vec<f64>> = test_pairs
        .iter()
        .map(|p| p.hr.iter().map(|v| *v as f64).collect())
        .collect();
    let ests: Vec<Vec<f64>> = estimates
        .iter()
        .map(|e| e.iter().map(|v| *v as f64).collect())
        .collect();
    let pairs: Vec<(&[f64], &[f64])> = refs
        .iter()
        .zip(&ests)
        .map(|(r, e)| (r.as_slice(), e.as_slice()))
        .collect();
    let nmse = dataset_nmse_db(&pairs)?;

    let (lo, hi) = refs
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    let data_range = hi - lo;
    let mut ssim_acc = 0.0;
    for (r, e) in refs.iter().zip(&ests) {
        ssim_acc += ssim(r, e, hr_size, hr_size, data_range)?;
    }
    Ok(MetricReport {
        nmse_db: nmse,
        ssim: ssim_acc / test_pairs.len() as f64,
        n_patches: test_pairs.len(),
        domain,
        data_range,
        provenance: checkpoint.provenance,
        transform_fitted_on: transform.fitted_on.label(),
    })
}

/// NMSE of `estimate` against `reference`, in dB.
///
/// Both squared sums are accumulated in one loop with identical operation
/// order, so a zero estimate yields numerator == denominator bit-for-bit
/// and the result is exactly 0 dB; an exact match yields −∞ via
/// `log10(0)`.  The per-element mean cancels in the ratio.
pub fn nmse_db(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.is_empty() || reference.len() != estimate.len() {
        return Err(Error::Shape(format!(
            "nmse_db needs matching non-empty inputs, got {} vs {}",
            reference.len(),
            estimate.len()
        )));
    }
    let (num, den) = squared_sums(reference, estimate);
    if den == 0.0 {
        return Err(Error::Data(
            "nmse_db reference is all zero; denominator undefined".into(),
        ));
    }
    Ok(10.0 * (num / den).log10())
}

/// Pooled NMSE over a set of (reference, estimate) pairs, in dB.
///
/// Sums Σ‖ref−est‖² and Σ‖ref‖² over every pair before taking the ratio,
/// so individual all-zero references are tolerated as long as the pool as
/// a whole carries signal.
pub fn dataset_nmse_db(pairs: &[(&[f64], &[f64])]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Data("dataset_nmse_db needs at least one pair".into()));
    }
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (i, (reference, estimate)) in pairs.iter().enumerate() {
        if reference.is_empty() || reference.len() != estimate.len() {
            return Err(Error::Shape(format!(
                "pair {i}: mismatched shapes {} vs {}",
                reference.len(),
                estimate.len()
            )));
        }
        let (n, d) = squared_sums(reference, estimate);
        num += n;
        den += d;
    }
    if den == 0.0 {
        return Err(Error::Data(
            "dataset_nmse_db: every reference is all zero".into(),
        ));
    }
    Ok(10.0 * (num / den).log10())
}

/// Shared accumulation for the NMSE numerator and denominator.
fn squared_sums(reference: &[f64], estimate: &[f64]) -> (f64, f64) {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (r, e) in reference.iter().zip(estimate) {
        let d = r - e;
        num += d * d;
        den += r * r;
    }
    (num, den)
}

/// Mean structural similarity between two images of shape
/// `height`×`width` (row-major), with the given dynamic range.
///
/// Local statistics are weighted by an 11×11 Gaussian window (σ = 1.5)
/// computed separably in f64; the map is averaged over every window
/// position that lies fully inside the image.
pub fn ssim(
    reference: &[f64],
    estimate: &[f64],
    height: usize,
    width: usize,
    data_range: f64,
) -> Result<f64> {
    if reference.len() != height * width || estimate.len() != height * width {
        return Err(Error::Shape(format!(
            "ssim inputs must both be {height}x{width}, got {} and {} values",
            reference.len(),
            estimate.len()
        )));
    }
    if height < SSIM_WINDOW || width < SSIM_WINDOW {
        return Err(Error::Dimension(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {height}x{width}"
        )));
    }
    if !(data_range > 0.0) || !data_range.is_finite() {
        return Err(Error::Config(format!(
            "ssim data_range must be positive and finite, got {data_range}"
        )));
    }

    let window = gaussian_window();
    // Weighted local moments of x, y, x², y², and x·y at every valid
    // window position, via two separable passes each.
    let mu_x = filter_valid(reference, height, width, &window);
    let mu_y = filter_valid(estimate, height, width, &window);
    let sq = |v: &[f64]| -> Vec<f64> { v.iter().map(|a| a * a).collect() };
    let xy: Vec<f64> = reference
        .iter()
        .zip(estimate)
        .map(|(a, b)| a * b)
        .collect();
    let e_xx = filter_valid(&sq(reference), height, width, &window);
    let e_yy = filter_valid(&sq(estimate), height, width, &window);
    let e_xy = filter_valid(&xy, height, width, &window);

    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let mut acc = 0.0f64;
    for i in 0..mu_x.len() {
        acc += ssim_at(mu_x[i], mu_y[i], e_xx[i], e_yy[i], e_xy[i], c1, c2);
    }
    Ok(acc / mu_x.len() as f64)
}

/// Local SSIM value from weighted first and second moments.
fn ssim_at(mu_x: f64, mu_y: f64, e_xx: f64, e_yy: f64, e_xy: f64, c1: f64, c2: f64) -> f64 {
    let var_x = e_xx - mu_x * mu_x;
    let var_y = e_yy - mu_y * mu_y;
    let cov = e_xy - mu_x * mu_y;
    ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2))
        / ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2))
}

/// Normalized 1-D Gaussian window; the separable outer product sums to 1.
fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0f64; SSIM_WINDOW];
    let center = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - center;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *v;
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Separable windowed filter evaluated only where the window fits,
/// returning an (height−10)×(width−10) map.
fn filter_valid(img: &[f64], height: usize, width: usize, window: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let out_w = width - SSIM_WINDOW + 1;
    let out_h = height - SSIM_WINDOW + 1;
    // Horizontal pass over every row, then vertical over valid rows.
    let mut rows = vec![0.0f64; height * out_w];
    for y in 0..height {
        let src = &img[y * width..(y + 1) * width];
        let dst = &mut rows[y * out_w..(y + 1) * out_w];
        for (x, d) in dst.iter_mut().enumerate() {
            let mut s = 0.0;
            for (k, wk) in window.iter().enumerate() {
                s += wk * src[x + k];
            }
            *d = s;
        }
    }
    let mut out = vec![0.0f64; out_h * out_w];
    for y in 0..out_h {
        for x in 0..out_w {
            let mut s = 0.0;
            for (k, wk) in window.iter().enumerate() {
                s += wk * rows[(y + k) * out_w + x];
            }
            out[y * out_w + x] = s;
        }
    }
    out
}
