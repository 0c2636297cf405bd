//! Seeded two-domain synthetic data generator.
//!
//! The "simulated" domain S is a stack of monthly emission maps built from
//! static ingredients — anisotropic Gaussian source bumps, a multiplicative
//! power-law spectral texture, and an ocean mask — animated by a per-bump
//! seasonal cycle. The "observed" domain O is derived from S by the
//! degradations a retrieval product typically carries: temporal aggregation
//! over a window of frames, spatial smoothing, multiplicative noise, a
//! gain/exponent dynamic-range change, and a coarser native grid. Every
//! stage is seeded, so a dataset is a pure function of its configs.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::dataset::{build_records, DatasetManifest, SplitPolicy};
use crate::error::{Error, Result};
use crate::grid::{slice_into_patches, DomainTag, EmissionMap, DEFAULT_SPECIES, PATCH_SIZE};
use crate::resample;

/// Native resolution, degrees per cell, of fine-grid S maps.
pub const FINE_RESOLUTION_DEG: f64 = 0.25;
/// Instrument id stamped on derived observed-like maps.
pub const OBSERVED_ID: u32 = 1;
/// Frames per seasonal cycle; `sin²(π·t/12)` repeats yearly on monthly frames.
pub const FRAMES_PER_YEAR: u32 = 12;
/// Default train/val/test fractions for generated manifests.
pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.7, 0.2, 0.1);
/// Log-std of the multiplicative texture field: exp(σ·n) for standardized n.
const TEXTURE_LOG_STD: f64 = 0.25;
/// Spectral slope of the smooth field whose low tail becomes the ocean mask.
const MASK_FIELD_SLOPE: f64 = 3.0;

/// Static composition of the simulated domain: grid shape, source bumps,
/// texture spectrum, ocean share, and the seed all of them derive from.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldConfig {
    pub height: usize,
    pub width: usize,
    pub blob_count: usize,
    /// Power-law exponent of the texture spectrum: P(k) ∝ k^(−slope).
    pub spectral_slope: f64,
    /// Share of cells zeroed by the static ocean mask, in [0, 1).
    pub zero_fraction: f64,
    /// Overall bump amplitude scale.
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            height: 128,
            width: 128,
            blob_count: 25,
            spectral_slope: 2.5,
            zero_fraction: 0.3,
            amplitude: 1.0,
            seed: 0,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("height", self.height), ("width", self.width)] {
            if n < PATCH_SIZE || n % PATCH_SIZE != 0 {
                return Err(Error::Config(format!(
                    "{name} must be at least {PATCH_SIZE} and divisible by {PATCH_SIZE}, got {n}"
                )));
            }
        }
        if self.blob_count == 0 {
            return Err(Error::Config("blob_count must be at least 1".into()));
        }
        if !self.spectral_slope.is_finite() || self.spectral_slope < 0.0 {
            return Err(Error::Config(format!(
                "spectral_slope must be finite and non-negative, got {}",
                self.spectral_slope
            )));
        }
        if !(0.0..1.0).contains(&self.zero_fraction) {
            return Err(Error::Config(format!(
                "zero_fraction must lie in [0, 1), got {}",
                self.zero_fraction
            )));
        }
        if !(self.amplitude.is_finite() && self.amplitude > 0.0) {
            return Err(Error::Config(format!(
                "amplitude must be finite and positive, got {}",
                self.amplitude
            )));
        }
        Ok(())
    }
}

/// The S→O degradation chain. Each stage has a null setting (window 1,
/// σ 0, noise 0, gain 1, gamma 1, downscale 1) under which it is skipped,
/// so the all-null config is a bit-exact identity on the values.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainShiftConfig {
    /// Number of consecutive frames averaged into one observed frame.
    pub aggregation_window: usize,
    /// Gaussian smoothing radius in cells.
    pub blur_sigma: f64,
    /// Multiplicative lognormal noise: v ← v·exp(σ·z), z ~ N(0,1).
    pub noise_level: f64,
    /// Dynamic-range map v ← gain·v^gamma.
    pub gain: f64,
    pub gamma: f64,
    /// Native-grid coarsening factor of the observed product.
    pub native_downscale: usize,
}

impl Default for DomainShiftConfig {
    fn default() -> Self {
        DomainShiftConfig {
            aggregation_window: 6,
            blur_sigma: 1.5,
            noise_level: 0.2,
            gain: 2.5,
            gamma: 0.85,
            native_downscale: 2,
        }
    }
}

impl DomainShiftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.aggregation_window == 0 {
            return Err(Error::Config("aggregation_window must be at least 1".into()));
        }
        if !(self.blur_sigma.is_finite() && self.blur_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "blur_sigma must be finite and non-negative, got {}",
                self.blur_sigma
            )));
        }
        if !(self.noise_level.is_finite() && self.noise_level >= 0.0) {
            return Err(Error::Config(format!(
                "noise_level must be finite and non-negative, got {}",
                self.noise_level
            )));
        }
        if !(self.gain.is_finite() && self.gain > 0.0) {
            return Err(Error::Config(format!(
                "gain must be finite and positive, got {}",
                self.gain
            )));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Config(format!(
                "gamma must be finite and positive, got {}",
                self.gamma
            )));
        }
        if self.native_downscale == 0 {
            return Err(Error::Config("native_downscale must be at least 1".into()));
        }
        Ok(())
    }
}

/// One source bump: a precomputed spatial map (amplitude folded in) plus
/// the phase of its seasonal cycle.
struct Bump {
    map: Vec<f64>,
    phase: f64,
}

/// Precomputed static ingredients of a simulated run. Building one is the
/// expensive part; individual frames are then cheap seasonal recombinations.
pub struct FieldSampler {
    cfg: FieldConfig,
    bumps: Vec<Bump>,
    texture: Vec<f64>,
    /// true = ocean, forced to exactly 0 in every frame.
    mask: Vec<bool>,
}

impl FieldSampler {
    pub fn new(cfg: &FieldConfig) -> Result<FieldSampler> {
        cfg.validate()?;
        let (h, w) = (cfg.height, cfg.width);
        let n = h * w;
        let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
        let bump_seed = master.gen::<u64>();
        let texture_seed = master.gen::<u64>();
        let mask_seed = master.gen::<u64>();

        let mut rng = ChaCha8Rng::seed_from_u64(bump_seed);
        let min_dim = h.min(w) as f64;
        let mut bumps = Vec::with_capacity(cfg.blob_count);
        for _ in 0..cfg.blob_count {
            let cy = rng.gen_range(0.0..h as f64);
            let cx = rng.gen_range(0.0..w as f64);
            // Two source populations, absolute-pixel scales (capped for tiny
            // grids): broad carriers hold most of the signal power, a sharp
            // ~2 px minority adds structure a 2× downsample aliases away.
            let (lo, hi): (f64, f64) = if rng.gen_bool(0.5) {
                (1.8, 2.6)
            } else {
                (6.0, 14.0)
            };
            let hi = hi.min(min_dim / 4.0);
            let lo = lo.min(hi * 0.6);
            let sigma_major = rng.gen_range(lo..hi);
            let sigma_minor = sigma_major / rng.gen_range(1.0..3.0);
            let theta = rng.gen_range(0.0..PI);
            let amp = cfg.amplitude * rng.gen_range(0.3..1.0);
            let phase = rng.gen_range(0.0..PI);
            // Rotated anisotropic quadratic form [qa qb; qb qc].
            let (sin_t, cos_t) = theta.sin_cos();
            let inv1 = 1.0 / (sigma_major * sigma_major);
            let inv2 = 1.0 / (sigma_minor * sigma_minor);
            let qa = cos_t * cos_t * inv1 + sin_t * sin_t * inv2;
            let qc = sin_t * sin_t * inv1 + cos_t * cos_t * inv2;
            let qb = sin_t * cos_t * (inv1 - inv2);
            let mut map = Vec::with_capacity(n);
            for r in 0..h {
                let dy = r as f64 - cy;
                for c in 0..w {
                    let dx = c as f64 - cx;
                    let q = qa * dx * dx + 2.0 * qb * dx * dy + qc * dy * dy;
                    map.push(amp * (-0.5 * q).exp());
                }
            }
            bumps.push(Bump { map, phase });
        }

        let texture_noise = power_law_field(h, w, cfg.spectral_slope, texture_seed)?;
        let texture = texture_noise
            .iter()
            .map(|&x| (TEXTURE_LOG_STD * x).exp())
            .collect();

        // Ocean = the round(zero_fraction·n) lowest cells of a smooth seeded
        // field; rank quantization makes the share exact up to one cell.
        let mut mask = vec![false; n];
        let zero_count = (cfg.zero_fraction * n as f64).round() as usize;
        if zero_count > 0 {
            let sea_level = power_law_field(h, w, MASK_FIELD_SLOPE, mask_seed)?;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| {
                sea_level[a]
                    .partial_cmp(&sea_level[b])
                    .expect("standardized field is finite")
                    .then(a.cmp(&b))
            });
            for &i in &order[..zero_count] {
                mask[i] = true;
            }
        }

        Ok(FieldSampler {
            cfg: cfg.clone(),
            bumps,
            texture,
            mask,
        })
    }

    pub fn config(&self) -> &FieldConfig {
        &self.cfg
    }

    /// Static ocean mask; true entries are exactly 0 in every frame.
    pub fn ocean_mask(&self) -> &[bool] {
        &self.mask
    }

    /// Render the frame at time index `t`: per-bump seasonal weights applied
    /// to the static maps, times texture, zeroed over the ocean.
    pub fn frame(&self, t: u32) -> Result<EmissionMap> {
        let (h, w) = (self.cfg.height, self.cfg.width);
        let n = h * w;
        let mut acc = vec![0f64; n];
        for bump in &self.bumps {
            let s = (PI * f64::from(t) / f64::from(FRAMES_PER_YEAR) + bump.phase).sin();
            let season = s * s;
            for (a, m) in acc.iter_mut().zip(&bump.map) {
                *a += season * m;
            }
        }
        let values = acc
            .iter()
            .zip(&self.mask)
            .zip(&self.texture)
            .map(|((&a, &ocean), &tex)| if ocean { 0.0 } else { (a * tex) as f32 })
            .collect();
        EmissionMap::new(
            values,
            h,
            w,
            FINE_RESOLUTION_DEG,
            DomainTag::Simulated,
            t,
            DEFAULT_SPECIES,
        )
    }
}

/// One-shot frame render. Prefer [`FieldSampler`] when generating a run:
/// the static ingredients are rebuilt on every call here.
pub fn gen_simulated_frame(cfg: &FieldConfig, t: u32) -> Result<EmissionMap> {
    FieldSampler::new(cfg)?.frame(t)
}

/// Apply the S→O degradation chain to one window of simulated frames.
///
/// Stages run in order: temporal mean → Gaussian blur → multiplicative
/// lognormal noise → gain·v^gamma → bicubic downsample → clamp at 0. Cells
/// that are zero in the temporal mean (the static ocean) are re-zeroed
/// after the value stages, and coarse cells whose source block is entirely
/// ocean are re-zeroed after the downsample, so the mask survives the
/// chain. Null stage settings are skipped outright, which makes the all-null
/// config a bit-exact identity on the values.
pub fn derive_observed_frame(
    frames: &[EmissionMap],
    shift: &DomainShiftConfig,
    seed: u64,
) -> Result<EmissionMap> {
    shift.validate()?;
    if frames.len() != shift.aggregation_window {
        return Err(Error::Config(format!(
            "aggregation_window is {} but {} frames were supplied",
            shift.aggregation_window,
            frames.len()
        )));
    }
    let first = &frames[0];
    let (h, w) = (first.height(), first.width());
    for f in frames {
        if f.height() != h || f.width() != w {
            return Err(Error::Shape(format!(
                "aggregation window mixes {}x{} and {}x{} frames",
                h,
                w,
                f.height(),
                f.width()
            )));
        }
        if f.resolution_deg != first.resolution_deg {
            return Err(Error::Shape(format!(
                "aggregation window mixes resolutions {} and {}",
                first.resolution_deg, f.resolution_deg
            )));
        }
    }

    let n = h * w;
    let inv_k = 1.0 / frames.len() as f64;
    let mut values = vec![0f64; n];
    for f in frames {
        for (v, &x) in values.iter_mut().zip(f.values()) {
            *v += f64::from(x);
        }
    }
    for v in &mut values {
        *v *= inv_k;
    }
    // The bumps are strictly positive over land, so a zero temporal mean
    // identifies the static ocean exactly.
    let ocean: Vec<bool> = values.iter().map(|&v| v == 0.0).collect();

    if shift.blur_sigma > 0.0 {
        values = gaussian_blur(&values, h, w, shift.blur_sigma);
    }
    if shift.noise_level > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut values {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v *= (shift.noise_level * z).exp();
        }
    }
    if shift.gain != 1.0 || shift.gamma != 1.0 {
        for v in &mut values {
            *v = shift.gain * v.powf(shift.gamma);
        }
    }
    for (v, &sea) in values.iter_mut().zip(&ocean) {
        if sea {
            *v = 0.0;
        }
    }

    let scale = shift.native_downscale;
    let (out_values, out_h, out_w) = if scale > 1 {
        let fine: Vec<f32> = values.iter().map(|&v| v as f32).collect();
        let mut coarse = resample::bicubic_downsample(&fine, h, w, scale)?;
        let (ch, cw) = (h / scale, w / scale);
        for cy in 0..ch {
            for cx in 0..cw {
                let all_sea = (0..scale).all(|dy| {
                    (0..scale).all(|dx| ocean[(cy * scale + dy) * w + cx * scale + dx])
                });
                if all_sea {
                    coarse[cy * cw + cx] = 0.0;
                }
            }
        }
        (coarse, ch, cw)
    } else {
        (values.iter().map(|&v| v as f32).collect(), h, w)
    };
    let out_values = out_values.iter().map(|&v| v.max(0.0)).collect();

    EmissionMap::new(
        out_values,
        out_h,
        out_w,
        first.resolution_deg * scale as f64,
        DomainTag::Observed(OBSERVED_ID),
        first.time_index,
        first.species.clone(),
    )
}

/// Manifests of one generated two-domain run: S at its native fine grid,
/// the same frames coarsened ×2, and the derived O frames.
#[derive(Debug)]
pub struct SynthDataset {
    pub s_fine: DatasetManifest,
    pub s_coarse: DatasetManifest,
    pub o: DatasetManifest,
    pub n_s_frames: usize,
    pub n_o_frames: usize,
}

/// Generate a full run under `out_dir`: `n_frames` simulated frames written
/// at fine and ×2-coarsened resolution, one observed frame per sliding
/// window of `shift.aggregation_window` frames, and one randomly split
/// manifest per family (`manifest_s_fine.csv`, `manifest_s_coarse.csv`,
/// `manifest_o.csv`). `seed` drives the split shuffles and the observed
/// noise; the field itself is governed by `field.seed`.
pub fn gen_dataset(
    field: &FieldConfig,
    shift: &DomainShiftConfig,
    n_frames: usize,
    out_dir: &Path,
    seed: u64,
) -> Result<SynthDataset> {
    field.validate()?;
    shift.validate()?;
    if n_frames < shift.aggregation_window {
        return Err(Error::Config(format!(
            "n_frames ({n_frames}) must cover at least one aggregation window ({})",
            shift.aggregation_window
        )));
    }
    // Every emitted family must tile into PATCH_SIZE patches: the coarse S
    // copy halves the grid and the O grid divides it by native_downscale.
    for factor in [2, shift.native_downscale] {
        for (name, dim) in [("height", field.height), ("width", field.width)] {
            if dim % (PATCH_SIZE * factor) != 0 {
                return Err(Error::Config(format!(
                    "{name} {dim} does not tile into {PATCH_SIZE}-cell patches after /{factor}"
                )));
            }
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let noise_master = master.gen::<u64>();
    let split_seeds = [master.gen::<u64>(), master.gen::<u64>(), master.gen::<u64>()];

    let sampler = FieldSampler::new(field)?;
    let mut fine_frames = Vec::with_capacity(n_frames);
    let mut fine_entries = Vec::with_capacity(n_frames);
    let mut coarse_entries = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let map = sampler.frame(t as u32)?;
        let name = format!("s_fine_{t:03}.emg");
        map.write_emg(&out_dir.join(&name))?;
        fine_entries.push(record_entry(name, &map)?);
        let coarse = map.coarsen(2)?;
        let coarse_name = format!("s_coarse_{t:03}.emg");
        coarse.write_emg(&out_dir.join(&coarse_name))?;
        coarse_entries.push(record_entry(coarse_name, &coarse)?);
        fine_frames.push(map);
    }

    let mut noise_rng = ChaCha8Rng::seed_from_u64(noise_master);
    let k = shift.aggregation_window;
    let n_windows = n_frames - k + 1;
    let mut o_entries = Vec::with_capacity(n_windows);
    for j in 0..n_windows {
        let window_seed = noise_rng.gen::<u64>();
        let map = derive_observed_frame(&fine_frames[j..j + k], shift, window_seed)?;
        let name = format!("o_{j:03}.emg");
        map.write_emg(&out_dir.join(&name))?;
        o_entries.push(record_entry(name, &map)?);
    }

    let manifests: Vec<DatasetManifest> = [
        (fine_entries, "manifest_s_fine.csv", split_seeds[0]),
        (coarse_entries, "manifest_s_coarse.csv", split_seeds[1]),
        (o_entries, "manifest_o.csv", split_seeds[2]),
    ]
    .into_iter()
    .map(|(entries, file, split_seed)| {
        let unsplit = DatasetManifest {
            records: build_records(entries),
            seed: split_seed,
            split_policy: SplitPolicy::RandomFraction {
                train: DEFAULT_SPLIT.0,
                val: DEFAULT_SPLIT.1,
                test: DEFAULT_SPLIT.2,
            },
        };
        let manifest = unsplit.split_random(DEFAULT_SPLIT, split_seed)?;
        manifest.write_csv(&out_dir.join(file))?;
        Ok(manifest)
    })
    .collect::<Result<_>>()?;
    let [s_fine, s_coarse, o]: [DatasetManifest; 3] = manifests
        .try_into()
        .expect("three manifest families were built");

    Ok(SynthDataset {
        s_fine,
        s_coarse,
        o,
        n_s_frames: n_frames,
        n_o_frames: n_windows,
    })
}

/// Manifest entry for one written map: file name, domain, time, and the
/// per-patch empty flags in tiling order.
fn record_entry(name: String, map: &EmissionMap) -> Result<(String, DomainTag, u32, Vec<bool>)> {
    let empties = slice_into_patches(map, PATCH_SIZE)?
        .iter()
        .map(|p| p.empty)
        .collect();
    Ok((name, map.domain, map.time_index, empties))
}

/// Real standardized field with power spectrum P(k) ∝ k^(−slope): complex
/// white noise shaped by |k|^(−slope/2) in frequency space, inverse FFT,
/// real part, then normalized to mean 0 / std 1.
fn power_law_field(height: usize, width: usize, slope: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spectrum = vec![Complex::new(0.0, 0.0); height * width];
    for ky in 0..height {
        let fy = signed_freq(ky, height);
        for kx in 0..width {
            let fx = signed_freq(kx, width);
            let k2 = fy * fy + fx * fx;
            // Draw unconditionally so the stream does not depend on k.
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            if k2 > 0.0 {
                let shape = k2.powf(-slope / 4.0);
                spectrum[ky * width + kx] = Complex::new(re * shape, im * shape);
            }
        }
    }
    fft2(&mut spectrum, height, width, true);
    let field: Vec<f64> = spectrum.iter().map(|c| c.re).collect();
    let n = field.len() as f64;
    let mean = field.iter().sum::<f64>() / n;
    let var = field.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if !(var.is_finite() && var > 0.0) {
        return Err(Error::Numeric(format!(
            "degenerate power-law field: variance {var}"
        )));
    }
    let std = var.sqrt();
    Ok(field.iter().map(|&x| (x - mean) / std).collect())
}

/// Signed frequency (cycles across the grid) of DFT bin `i` of `n`.
fn signed_freq(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

/// In-place 2-D FFT over a row-major grid: rows, then columns.
fn fft2(buf: &mut [Complex<f64>], height: usize, width: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let row_fft = if inverse {
        planner.plan_fft_inverse(width)
    } else {
        planner.plan_fft_forward(width)
    };
    for row in buf.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(height)
    } else {
        planner.plan_fft_forward(height)
    };
    let mut col = vec![Complex::new(0.0, 0.0); height];
    for x in 0..width {
        for y in 0..height {
            col[y] = buf[y * width + x];
        }
        col_fft.process(&mut col);
        for y in 0..height {
            buf[y * width + x] = col[y];
        }
    }
}

/// Separable Gaussian blur with mirror padding; kernel truncated at 3σ
/// and renormalized, so a constant field is preserved exactly.
fn gaussian_blur(values: &[f64], height: usize, width: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    for i in 0..=2 * radius {
        let d = i as f64 - radius as f64;
        kernel.push((-0.5 * d * d / (sigma * sigma)).exp());
    }
    let total: f64 = kernel.iter().sum();
    for w in &mut kernel {
        *w /= total;
    }

    let reflect = |i: isize, n: usize| -> usize {
        let n = n as isize;
        let mut i = i;
        // Mirror across the boundary cells; grids here are far wider than
        // the kernel radius, so one fold per side suffices.
        if i < 0 {
            i = -i;
        }
        if i >= n {
            i = 2 * n - 2 - i;
        }
        i as usize
    };

    let mut rows = vec![0f64; values.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (i, &kw) in kernel.iter().enumerate() {
                let sx = reflect(x as isize + i as isize - radius as isize, width);
                acc += kw * values[y * width + sx];
            }
            rows[y * width + x] = acc;
        }
    }
    let mut out = vec![0f64; values.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for (i, &kw) in kernel.iter().enumerate() {
                let sy = reflect(y as isize + i as isize - radius as isize, height);
                acc += kw * rows[sy * width + x];
            }
            out[y * width + x] = acc;
        }
    }
    out
}
