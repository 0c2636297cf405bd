//! Separable bicubic resampling (Keys kernel), used to derive LR inputs
//! from HR ground truth and as the interpolation baseline in reports.
//!
//! Convention: align-corners=false (source coord of output i is
//! `(i+0.5)·in/out − 0.5`), clamp-to-edge padding, a = −0.5. Accumulation
//! is f64 throughout; the public entry points clamp the result at 0
//! because emission flux is non-negative.

use crate::error::{Error, Result};

/// Piecewise-cubic Keys kernel with sharpness `a` (must be negative).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BicubicKernel {
    pub a: f64,
}

impl Default for BicubicKernel {
    fn default() -> Self {
        BicubicKernel { a: -0.5 }
    }
}

impl BicubicKernel {
    pub fn new(a: f64) -> Result<Self> {
        if !(a < 0.0) {
            return Err(Error::Config(format!(
                "bicubic kernel parameter must be negative, got {a}"
            )));
        }
        Ok(BicubicKernel { a })
    }

    /// Kernel weight at signed offset `t`.
    pub fn weight(&self, t: f64) -> f64 {
        cubic_weight(t, self.a)
    }
}

/// Keys cubic: `(a+2)|t|³−(a+3)|t|²+1` for |t|≤1,
/// `a|t|³−5a|t|²+8a|t|−4a` for 1<|t|<2, else 0.
pub fn cubic_weight(t: f64, a: f64) -> f64 {
    let x = t.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        (((x - 5.0) * x + 8.0) * x - 4.0) * a
    } else {
        0.0
    }
}

/// Four source taps (clamped indices + weights) for one output position.
fn axis_taps(out_i: usize, in_size: usize, out_size: usize, a: f64) -> ([usize; 4], [f64; 4]) {
    let scale = in_size as f64 / out_size as f64;
    let src = (out_i as f64 + 0.5) * scale - 0.5;
    let base = src.floor();
    let t = src - base;
    let base = base as i64;
    let mut idx = [0usize; 4];
    let mut w = [0f64; 4];
    for k in 0..4 {
        idx[k] = (base - 1 + k as i64).clamp(0, in_size as i64 - 1) as usize;
        w[k] = cubic_weight(t + 1.0 - k as f64, a);
    }
    (idx, w)
}

/// Two-pass separable resize without the non-negativity clamp.
/// Horizontal pass first, then vertical; all arithmetic in f64.
fn resize_unclamped(
    values: &[f32],
    h: usize,
    w: usize,
    out_h: usize,
    out_w: usize,
    a: f64,
) -> Result<Vec<f64>> {
    if h == 0 || w == 0 || out_h == 0 || out_w == 0 {
        return Err(Error::Dimension(format!(
            "resize dimensions must be positive, got {h}x{w} -> {out_h}x{out_w}"
        )));
    }
    if values.len() != h * w {
        return Err(Error::Dimension(format!(
            "value count {} does not match {h}x{w}",
            values.len()
        )));
    }
    let col_taps: Vec<_> = (0..out_w).map(|i| axis_taps(i, w, out_w, a)).collect();
    let mut horiz = vec![0f64; h * out_w];
    for y in 0..h {
        let row = &values[y * w..(y + 1) * w];
        let out_row = &mut horiz[y * out_w..(y + 1) * out_w];
        for (x, (idx, wt)) in col_taps.iter().enumerate() {
            out_row[x] = wt[0] * row[idx[0]] as f64
                + wt[1] * row[idx[1]] as f64
                + wt[2] * row[idx[2]] as f64
                + wt[3] * row[idx[3]] as f64;
        }
    }
    let row_taps: Vec<_> = (0..out_h).map(|i| axis_taps(i, h, out_h, a)).collect();
    let mut out = vec![0f64; out_h * out_w];
    for (y, (idx, wt)) in row_taps.iter().enumerate() {
        let (r0, r1, r2, r3) = (
            &horiz[idx[0] * out_w..idx[0] * out_w + out_w],
            &horiz[idx[1] * out_w..idx[1] * out_w + out_w],
            &horiz[idx[2] * out_w..idx[2] * out_w + out_w],
            &horiz[idx[3] * out_w..idx[3] * out_w + out_w],
        );
        let out_row = &mut out[y * out_w..(y + 1) * out_w];
        for x in 0..out_w {
            out_row[x] = wt[0] * r0[x] + wt[1] * r1[x] + wt[2] * r2[x] + wt[3] * r3[x];
        }
    }
    Ok(out)
}

fn clamp_narrow(values: Vec<f64>) -> Vec<f32> {
    values.into_iter().map(|v| v.max(0.0) as f32).collect()
}

/// Coarsen a grid by an integer factor; dimensions must divide evenly.
/// Output is clamped at 0 from below.
pub fn bicubic_downsample(values: &[f32], h: usize, w: usize, factor: usize) -> Result<Vec<f32>> {
    if factor == 0 {
        return Err(Error::Dimension("downsample factor must be positive".into()));
    }
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::Dimension(format!(
            "grid {h}x{w} not divisible by downsample factor {factor}"
        )));
    }
    if factor == 1 {
        return Ok(values.to_vec());
    }
    let out = resize_unclamped(values, h, w, h / factor, w / factor, -0.5)?;
    Ok(clamp_narrow(out))
}

/// Enlarge a grid by an integer factor. Output is clamped at 0 from below.
pub fn bicubic_upsample(values: &[f32], h: usize, w: usize, factor: usize) -> Result<Vec<f32>> {
    if factor == 0 {
        return Err(Error::Dimension("upsample factor must be positive".into()));
    }
    if factor == 1 {
        return Ok(values.to_vec());
    }
    let out = resize_unclamped(values, h, w, h * factor, w * factor, -0.5)?;
    Ok(clamp_narrow(out))
}
