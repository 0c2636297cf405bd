//! Invertible quantile normalization of emission-value distributions.
//!
//! A fitted transform maps pool values to a target distribution (standard
//! normal by default) through the empirical CDF and back. Refitting the
//! transform on a target-domain pool is the data-transformation adaptation
//! strategy, so fits on small patch fractions (with subset averaging) are
//! first-class here.
//!
//! Plateaus (e.g. heavy zero inflation from ocean cells) are handled by
//! compressing equal quantile knots to their mean normalized rank, which
//! keeps the knot sequence strictly increasing and the map invertible;
//! inputs outside the fitted range clamp to the boundary knot in both
//! directions.

use std::fs;
use std::path::Path;

use rand::seq::index::sample as index_sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::DomainTag;

pub const DEFAULT_N_QUANTILES: usize = 1000;
pub const DEFAULT_SUBSAMPLE_CAP: usize = 100_000;
/// CDF clip bound before the normal inverse, keeping outputs finite.
pub const NORMAL_CLIP_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetDist {
    Uniform01,
    StandardNormal,
}

impl TargetDist {
    pub fn label(self) -> &'static str {
        match self {
            TargetDist::Uniform01 => "uniform",
            TargetDist::StandardNormal => "normal",
        }
    }

    pub fn parse_label(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(TargetDist::Uniform01),
            "normal" => Ok(TargetDist::StandardNormal),
            _ => Err(Error::Data(format!("unknown target distribution `{s}`"))),
        }
    }
}

/// A fitted, invertible quantile transform.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileTransform {
    /// Raw fitted quantiles at ranks k/(n−1); non-decreasing, all finite.
    quantiles: Vec<f64>,
    pub target: TargetDist,
    pub fitted_on: DomainTag,
    /// Fraction of the source patch pool this fit saw, in (0, 1].
    pub fit_fraction: f64,
    pub seed: u64,
    /// Strictly increasing unique quantile values.
    knots_x: Vec<f64>,
    /// Mean normalized rank of each unique value; strictly increasing.
    knots_u: Vec<f64>,
}

impl QuantileTransform {
    fn from_quantiles(
        quantiles: Vec<f64>,
        target: TargetDist,
        fitted_on: DomainTag,
        fit_fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        if quantiles.len() < 2 {
            return Err(Error::Data(format!(
                "need at least 2 quantiles, got {}",
                quantiles.len()
            )));
        }
        if quantiles.iter().any(|q| !q.is_finite())
            || quantiles.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::Data(
                "quantiles must be finite and non-decreasing".into(),
            ));
        }
        if !(fit_fraction > 0.0 && fit_fraction <= 1.0) {
            return Err(Error::Data(format!(
                "fit_fraction must lie in (0,1], got {fit_fraction}"
            )));
        }
        let n = quantiles.len();
        let mut knots_x = Vec::new();
        let mut knots_u = Vec::new();
        let mut k = 0;
        while k < n {
            let mut end = k;
            while end + 1 < n && quantiles[end + 1] == quantiles[k] {
                end += 1;
            }
            // Plateau [k, end] collapses to its mean normalized rank.
            knots_x.push(quantiles[k]);
            knots_u.push((k + end) as f64 / 2.0 / (n - 1) as f64);
            k = end + 1;
        }
        Ok(QuantileTransform {
            quantiles,
            target,
            fitted_on,
            fit_fraction,
            seed,
            knots_x,
            knots_u,
        })
    }

    /// Fit on a value pool: optional seeded uniform subsampling (without
    /// replacement) down to `subsample_cap`, then empirical quantiles at
    /// ranks k/(n_quantiles−1) with linear interpolation between order
    /// statistics.
    pub fn fit(
        pool: &[f32],
        n_quantiles: usize,
        target: TargetDist,
        fitted_on: DomainTag,
        seed: u64,
        subsample_cap: usize,
    ) -> Result<Self> {
        if n_quantiles < 2 {
            return Err(Error::Config(format!(
                "n_quantiles must be at least 2, got {n_quantiles}"
            )));
        }
        if let Some(v) = pool.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite value {v} in fit pool")));
        }
        let mut values: Vec<f64> = if pool.len() > subsample_cap {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            index_sample(&mut rng, pool.len(), subsample_cap)
                .iter()
                .map(|i| pool[i] as f64)
                .collect()
        } else {
            pool.iter().map(|v| *v as f64).collect()
        };
        if values.len() < n_quantiles {
            return Err(Error::Data(format!(
                "fit pool has {} values after subsampling, need at least {n_quantiles}",
                values.len()
            )));
        }
        values.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        let m = values.len();
        let quantiles = (0..n_quantiles)
            .map(|k| {
                let h = k as f64 / (n_quantiles - 1) as f64 * (m - 1) as f64;
                let lo = h.floor() as usize;
                let frac = h - lo as f64;
                if frac == 0.0 || lo + 1 == m {
                    values[lo]
                } else {
                    values[lo] + frac * (values[lo + 1] - values[lo])
                }
            })
            .collect();
        Self::from_quantiles(quantiles, target, fitted_on, 1.0, seed)
    }

    pub fn n_quantiles(&self) -> usize {
        self.quantiles.len()
    }

    pub fn quantiles(&self) -> &[f64] {
        &self.quantiles
    }

    /// True when the fit pool was constant (single knot); apply then maps
    /// everything to the mid rank and invert returns the constant.
    pub fn is_degenerate(&self) -> bool {
        self.knots_x.len() == 1
    }

    pub fn value_range(&self) -> (f64, f64) {
        (self.quantiles[0], self.quantiles[self.quantiles.len() - 1])
    }

    /// Empirical CDF via the compressed knots; out-of-range inputs take
    /// the boundary knot's rank.
    fn cdf(&self, x: f64) -> f64 {
        interp(&self.knots_x, &self.knots_u, x)
    }

    /// Forward transform of one value.
    pub fn apply_value(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::Numeric(format!("cannot transform non-finite {x}")));
        }
        let u = self.cdf(x).clamp(0.0, 1.0);
        Ok(match self.target {
            TargetDist::Uniform01 => u,
            TargetDist::StandardNormal => {
                gaussian_inverse_cdf(u.clamp(NORMAL_CLIP_EPS, 1.0 - NORMAL_CLIP_EPS))?
            }
        })
    }

    /// Inverse transform of one value; output lies in the fitted range.
    pub fn invert_value(&self, z: f64) -> Result<f64> {
        if !z.is_finite() {
            return Err(Error::Numeric(format!("cannot invert non-finite {z}")));
        }
        let u = match self.target {
            TargetDist::Uniform01 => z.clamp(0.0, 1.0),
            TargetDist::StandardNormal => {
                // Mirror the forward clip so z beyond the clipped support
                // lands exactly on the boundary knot.
                let u = gaussian_cdf(z);
                if u <= NORMAL_CLIP_EPS {
                    0.0
                } else if u >= 1.0 - NORMAL_CLIP_EPS {
                    1.0
                } else {
                    u
                }
            }
        };
        Ok(interp(&self.knots_u, &self.knots_x, u))
    }

    pub fn apply_slice(&self, xs: &[f32]) -> Result<Vec<f32>> {
        xs.iter()
            .map(|x| self.apply_value(*x as f64).map(|v| v as f32))
            .collect()
    }

    pub fn invert_slice(&self, zs: &[f32]) -> Result<Vec<f32>> {
        zs.iter()
            .map(|z| self.invert_value(*z as f64).map(|v| v as f32))
            .collect()
    }

    /// Serialize as CSV: a name header, one value row, then one quantile
    /// per line in shortest-round-trip f64 text (bit-exact round trip).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str("n_quantiles,target,fitted_on,fit_fraction,seed\n");
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            self.quantiles.len(),
            self.target.label(),
            self.fitted_on,
            self.fit_fraction,
            self.seed
        ));
        for q in &self.quantiles {
            out.push_str(&format!("{q}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != "n_quantiles,target,fitted_on,fit_fraction,seed" {
            return Err(Error::format(path, format!("bad transform header `{header}`")));
        }
        let meta = lines
            .next()
            .ok_or_else(|| Error::format(path, "missing metadata row"))?;
        let fields: Vec<&str> = meta.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::format(path, "metadata row must have 5 fields"));
        }
        let n: usize = fields[0]
            .parse()
            .map_err(|e| Error::format(path, format!("n_quantiles: {e}")))?;
        let target = TargetDist::parse_label(fields[1]).map_err(|e| Error::format(path, e.to_string()))?;
        let fitted_on = DomainTag::parse_label(fields[2]).map_err(|e| Error::format(path, e.to_string()))?;
        let fit_fraction: f64 = fields[3]
            .parse()
            .map_err(|e| Error::format(path, format!("fit_fraction: {e}")))?;
        let seed: u64 = fields[4]
            .parse()
            .map_err(|e| Error::format(path, format!("seed: {e}")))?;
        let quantiles: Vec<f64> = lines
            .filter(|l| !l.is_empty())
            .map(|l| {
                l.parse::<f64>()
                    .map_err(|e| Error::format(path, format!("quantile `{l}`: {e}")))
            })
            .collect::<Result<_>>()?;
        if quantiles.len() != n {
            return Err(Error::format(
                path,
                format!("expected {n} quantiles, found {}", quantiles.len()),
            ));
        }
        Self::from_quantiles(quantiles, target, fitted_on, fit_fraction, seed)
            .map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Piecewise-linear interpolation over strictly increasing knots `xs`,
/// clamping to the boundary values. A single knot maps everything to it.
fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let hi = xs.partition_point(|k| *k <= x);
    let (lo, hi) = (hi - 1, hi);
    let t = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + t * (ys[hi] - ys[lo])
}

/// Draw `n_subsets` independent patch subsets of size round(p·N) and fit
/// one transform per subset on the selected patches' pooled values.
pub fn fit_fraction(
    patches: &[&[f32]],
    p: f64,
    n_subsets: usize,
    n_quantiles: usize,
    target: TargetDist,
    fitted_on: DomainTag,
    seed: u64,
    subsample_cap: usize,
) -> Result<Vec<QuantileTransform>> {
    let subsets = subset_indices(patches.len(), p, n_subsets, seed)?;
    subsets
        .iter()
        .map(|subset| {
            let pool: Vec<f32> = subset
                .iter()
                .flat_map(|&i| patches[i].iter().copied())
                .collect();
            let mut t = QuantileTransform::fit(
                &pool,
                n_quantiles,
                target,
                fitted_on,
                seed,
                subsample_cap,
            )?;
            t.fit_fraction = p;
            Ok(t)
        })
        .collect()
}

/// The seeded subset draws behind [`fit_fraction`]: `n_subsets` independent
/// uniform samples without replacement of size round(p·N) from 0..n.
pub fn subset_indices(n: usize, p: f64, n_subsets: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Config(format!("fraction must lie in (0,1], got {p}")));
    }
    if n == 0 {
        return Err(Error::Data("cannot draw subsets from an empty pool".into()));
    }
    let size = (p * n as f64).round() as usize;
    if size < 1 {
        return Err(Error::Config(format!(
            "fraction {p} of {n} patches rounds to an empty subset"
        )));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut subsets = Vec::with_capacity(n_subsets);
    for _ in 0..n_subsets {
        let mut rng = ChaCha8Rng::seed_from_u64(master.gen());
        let mut idx: Vec<usize> = index_sample(&mut rng, n, size).into_vec();
        idx.sort_unstable();
        subsets.push(idx);
    }
    Ok(subsets)
}

/// Standard normal CDF.
pub fn gaussian_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
fn gaussian_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Φ⁻¹ via Acklam's rational approximation plus one Halley refinement
/// against the erfc-based CDF; absolute error well under 1e-9.
pub fn gaussian_inverse_cdf(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Numeric(format!(
            "inverse normal CDF domain is (0,1), got {u}"
        )));
    }
    // Reflect the upper half onto the lower: 1−u is exact for u ≥ 0.5
    // (Sterbenz), and Φ(x)−u is well-conditioned only for small u.
    if u > 0.5 {
        return Ok(-inverse_cdf_lower(1.0 - u));
    }
    Ok(inverse_cdf_lower(u))
}

fn inverse_cdf_lower(u: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let mut x = if u < P_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    // One Halley step on Φ(x) − u = 0.
    let e = gaussian_cdf(x) - u;
    let w = e / gaussian_pdf(x);
    x -= w / (1.0 + x * w / 2.0);
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, LogNormal, Normal};

    fn fit_simple(pool: &[f32], n: usize, target: TargetDist) -> QuantileTransform {
        QuantileTransform::fit(pool, n, target, DomainTag::Simulated, 9, DEFAULT_SUBSAMPLE_CAP)
            .unwrap()
    }

    /// Independent high-precision Φ⁻¹ oracle: bisection on the erfc-based
    /// CDF down to interval width 1e-13 (upper half via reflection, where
    /// the CDF comparison is well-conditioned).
    fn bisect_inverse_cdf(u: f64) -> f64 {
        if u > 0.5 {
            return -bisect_inverse_cdf(1.0 - u);
        }
        let (mut lo, mut hi) = (-40.0f64, 40.0f64);
        while hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            if gaussian_cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn uniform_rank_pool_gives_exact_quantiles() {
        let pool: Vec<f32> = (0..=100).map(|v| v as f32).collect();
        let t = fit_simple(&pool, 11, TargetDist::Uniform01);
        let want: Vec<f64> = (0..11).map(|k| (10 * k) as f64).collect();
        assert_eq!(t.quantiles(), &want[..]);
    }

    #[test]
    fn median_quantile_matches_sample_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dist = Normal::new(5.0f64, 1.0).unwrap();
        let pool: Vec<f32> = (0..10_000).map(|_| dist.sample(&mut rng) as f32).collect();
        let t = fit_simple(&pool, 1000, TargetDist::Uniform01);
        let fitted_median = t.invert_value(0.5).unwrap();
        let tol = 3.0 / (pool.len() as f64).sqrt();
        assert!(
            (fitted_median - 5.0).abs() < tol,
            "median {fitted_median} off true 5.0 beyond {tol}"
        );
    }

    #[test]
    fn constant_pool_is_degenerate_but_usable() {
        let pool = vec![4.25f32; 500];
        let t = fit_simple(&pool, 100, TargetDist::Uniform01);
        assert!(t.is_degenerate());
        assert!(t.quantiles().iter().all(|q| *q == 4.25));
        assert_eq!(t.apply_value(4.25).unwrap(), 0.5);
        assert_eq!(t.invert_value(0.9).unwrap(), 4.25);
    }

    #[test]
    fn fit_rejects_small_or_bad_pools() {
        let pool = vec![1.0f32; 5];
        assert!(QuantileTransform::fit(
            &pool,
            10,
            TargetDist::Uniform01,
            DomainTag::Simulated,
            0,
            DEFAULT_SUBSAMPLE_CAP
        )
        .is_err());
        let pool = vec![1.0f32, f32::INFINITY, 2.0];
        assert!(QuantileTransform::fit(
            &pool,
            2,
            TargetDist::Uniform01,
            DomainTag::Simulated,
            0,
            DEFAULT_SUBSAMPLE_CAP
        )
        .is_err());
    }

    #[test]
    fn subsampling_caps_the_pool_deterministically() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let pool: Vec<f32> = (0..5000).map(|_| rng.gen_range(0.0..1.0)).collect();
        let a = QuantileTransform::fit(&pool, 100, TargetDist::Uniform01, DomainTag::Simulated, 7, 1000)
            .unwrap();
        let b = QuantileTransform::fit(&pool, 100, TargetDist::Uniform01, DomainTag::Simulated, 7, 1000)
            .unwrap();
        assert_eq!(a, b);
        // Still close to the uncapped distribution.
        let full = fit_simple(&pool, 100, TargetDist::Uniform01);
        let max_diff = a
            .quantiles()
            .iter()
            .zip(full.quantiles())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        assert!(max_diff < 0.1, "capped fit drifted {max_diff}");
    }

    #[test]
    fn boundary_values_map_to_rank_extremes() {
        // Distinct values; minimum is unique so its rank is exactly 0.
        let pool: Vec<f32> = (0..101).map(|v| v as f32).collect();
        let t = fit_simple(&pool, 101, TargetDist::Uniform01);
        assert_eq!(t.apply_value(0.0).unwrap(), 0.0);
        assert_eq!(t.apply_value(100.0).unwrap(), 1.0);
        // Median of an odd-sized pool maps to rank 0.5 / normal 0.
        assert!((t.apply_value(50.0).unwrap() - 0.5).abs() < 1e-6);
        let tn = fit_simple(&pool, 101, TargetDist::StandardNormal);
        assert!(tn.apply_value(50.0).unwrap().abs() < 1e-6);
    }

    #[test]
    fn apply_is_monotone_on_a_sorted_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let pool: Vec<f32> = (0..3000).map(|_| rng.gen_range(0.0..50.0)).collect();
        for target in [TargetDist::Uniform01, TargetDist::StandardNormal] {
            let t = fit_simple(&pool, 500, target);
            let mut xs: Vec<f64> = (0..1000).map(|_| rng.gen_range(-5.0..55.0)).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let ys: Vec<f64> = xs.iter().map(|x| t.apply_value(*x).unwrap()).collect();
            for w in ys.windows(2) {
                assert!(w[0] <= w[1], "monotonicity broken: {} > {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn invert_boundaries_and_clamping() {
        let pool: Vec<f32> = (0..101).map(|v| v as f32).collect();
        let t = fit_simple(&pool, 101, TargetDist::Uniform01);
        assert_eq!(t.invert_value(0.0).unwrap(), 0.0);
        assert_eq!(t.invert_value(1.0).unwrap(), 100.0);
        assert_eq!(t.invert_value(1.7).unwrap(), 100.0);
        assert_eq!(t.invert_value(-0.5).unwrap(), 0.0);
        let tn = fit_simple(&pool, 101, TargetDist::StandardNormal);
        assert_eq!(tn.invert_value(25.0).unwrap(), 100.0);
        assert_eq!(tn.invert_value(-25.0).unwrap(), 0.0);
    }

    #[test]
    fn round_trip_within_a_thousandth_of_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let dist = LogNormal::new(0.0f64, 1.0).unwrap();
        let pool: Vec<f32> = (0..5000).map(|_| dist.sample(&mut rng) as f32).collect();
        let range = pool.iter().fold(f32::MIN, |m, v| m.max(*v)) as f64
            - pool.iter().fold(f32::MAX, |m, v| m.min(*v)) as f64;
        for target in [TargetDist::Uniform01, TargetDist::StandardNormal] {
            let t = fit_simple(&pool, 1000, target);
            let max_err = pool
                .iter()
                .map(|x| {
                    let z = t.apply_value(*x as f64).unwrap();
                    (t.invert_value(z).unwrap() - *x as f64).abs()
                })
                .fold(0.0f64, f64::max);
            assert!(
                max_err < 1e-3 * range,
                "{target:?}: round-trip error {max_err} vs range {range}"
            );
        }
    }

    #[test]
    fn zero_inflated_pools_stay_invertible() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let mut pool: Vec<f32> = vec![0.0; 2000];
        pool.extend((0..3000).map(|_| rng.gen_range(0.5f32..20.0)));
        let t = fit_simple(&pool, 1000, TargetDist::StandardNormal);
        // All zeros share one transformed value strictly inside the range.
        let z0 = t.apply_value(0.0).unwrap();
        let z_mid = t.apply_value(10.0).unwrap();
        assert!(z0 < z_mid);
        assert!(z0.is_finite() && z0 > gaussian_inverse_cdf(NORMAL_CLIP_EPS).unwrap());
        // Zeros round-trip exactly to zero (knot hit).
        assert_eq!(t.invert_value(z0).unwrap(), 0.0);
    }

    #[test]
    fn fit_is_order_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let mut pool: Vec<f32> = (0..2000).map(|_| rng.gen_range(0.0f32..9.0)).collect();
        let t1 = fit_simple(&pool, 200, TargetDist::Uniform01);
        use rand::seq::SliceRandom;
        pool.shuffle(&mut rng);
        let t2 = fit_simple(&pool, 200, TargetDist::Uniform01);
        assert_eq!(t1.quantiles(), t2.quantiles());
    }

    #[test]
    fn inverse_cdf_matches_bisection_oracle() {
        assert_eq!(gaussian_inverse_cdf(0.5).unwrap(), 0.0);
        assert!((gaussian_inverse_cdf(0.975).unwrap() - 1.959964).abs() < 1e-6);
        for u in [1e-7, 1e-4, 0.02, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.9999, 1.0 - 1e-7] {
            let got = gaussian_inverse_cdf(u).unwrap();
            let want = bisect_inverse_cdf(u);
            assert!(
                (got - want).abs() < 1e-9,
                "u={u}: got {got}, oracle {want}"
            );
        }
    }

    #[test]
    fn inverse_cdf_symmetry_and_domain() {
        // 1e-12 needs pdf(Φ⁻¹(u)) ≳ 1e-4, else the half-ulp of fl(1−u)
        // alone exceeds the bound; stay above u = 1e-4.
        for u in [1e-4, 0.01, 0.1, 0.25, 0.4] {
            let a = gaussian_inverse_cdf(u).unwrap();
            let b = gaussian_inverse_cdf(1.0 - u).unwrap();
            assert!((a + b).abs() < 1e-12, "u={u}: {a} vs {b}");
        }
        // Dyadic complements are exact all the way.
        assert_eq!(
            gaussian_inverse_cdf(0.25).unwrap(),
            -gaussian_inverse_cdf(0.75).unwrap()
        );
        assert!(gaussian_inverse_cdf(0.0).is_err());
        assert!(gaussian_inverse_cdf(1.0).is_err());
        assert!(gaussian_inverse_cdf(-0.1).is_err());
    }

    #[test]
    fn fraction_subsets_have_rounded_sizes_and_are_seeded() {
        let subsets = subset_indices(1000, 0.05, 3, 42).unwrap();
        assert_eq!(subsets.len(), 3);
        for s in &subsets {
            assert_eq!(s.len(), 50);
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            assert!(s.iter().all(|i| *i < 1000));
        }
        assert_ne!(subsets[0], subsets[1]);
        assert_eq!(subset_indices(1000, 0.05, 3, 42).unwrap(), subsets);
        assert!(subset_indices(1000, 0.0001, 3, 42).is_err());
        assert!(subset_indices(1000, 1.5, 3, 42).is_err());
    }

    #[test]
    fn full_fraction_fits_are_identical_across_subsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let patches: Vec<Vec<f32>> = (0..40)
            .map(|_| (0..16).map(|_| rng.gen_range(0.0f32..3.0)).collect())
            .collect();
        let refs: Vec<&[f32]> = patches.iter().map(|p| p.as_slice()).collect();
        let ts = fit_fraction(
            &refs,
            1.0,
            3,
            100,
            TargetDist::StandardNormal,
            DomainTag::Observed(0),
            5,
            DEFAULT_SUBSAMPLE_CAP,
        )
        .unwrap();
        assert_eq!(ts.len(), 3);
        assert_eq!(ts[0].quantiles(), ts[1].quantiles());
        assert_eq!(ts[1].quantiles(), ts[2].quantiles());
        assert_eq!(ts[0].fit_fraction, 1.0);
        assert_eq!(ts[0].fitted_on, DomainTag::Observed(0));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let pool: Vec<f32> = (0..500).map(|_| rng.gen_range(0.0f32..7.0)).collect();
        let mut t = fit_simple(&pool, 64, TargetDist::StandardNormal);
        t.fit_fraction = 0.05;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        t.write_csv(&path).unwrap();
        let bytes_a = std::fs::read(&path).unwrap();
        let loaded = QuantileTransform::read_csv(&path).unwrap();
        assert_eq!(loaded, t);
        loaded.write_csv(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), bytes_a);
    }

    #[test]
    fn csv_rejects_corrupted_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "wrong,header\n").unwrap();
        assert!(matches!(
            QuantileTransform::read_csv(&path),
            Err(Error::Format { .. })
        ));
        std::fs::write(
            &path,
            "n_quantiles,target,fitted_on,fit_fraction,seed\n3,normal,S,1,0\n0\n1\n",
        )
        .unwrap();
        assert!(matches!(
            QuantileTransform::read_csv(&path),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn pipeline_ends_reproduce_input_through_identity_network() {
        // Same transform applied forward then inverted (identity N between)
        // reproduces the input within round-trip tolerance.
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let pool: Vec<f32> = (0..4000).map(|_| rng.gen_range(0.0f32..12.0)).collect();
        let t = fit_simple(&pool, 1000, TargetDist::StandardNormal);
        let patch: Vec<f32> = pool[..256].to_vec();
        let forward = t.apply_slice(&patch).unwrap();
        let back = t.invert_slice(&forward).unwrap();
        for (b, x) in back.iter().zip(&patch) {
            assert!((b - x).abs() < 0.012 * 1.2, "{b} vs {x}");
        }
    }
}
