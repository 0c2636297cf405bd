//! Network building blocks with exact reverse-mode gradients.
//!
//! Convolutions use a shift-axpy formulation: each kernel tap adds a
//! scaled, shifted source row into the output row. Accumulation order is
//! fixed by the loops (never a runtime choice), so single-threaded runs
//! are bit-deterministic while the per-row inner loops still vectorize.

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

const LANES: usize = 8;

/// Dot product with a fixed 8-lane accumulator layout: deterministic
/// (the reduction tree is hardcoded) yet wide enough to vectorize.
pub fn dot_lanes<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..LANES {
            acc[l] = acc[l] + xa[l] * xb[l];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail = tail + *x * *y;
    }
    let mut s = T::zero();
    for v in acc {
        s = s + v;
    }
    s + tail
}

/// Sum with the same fixed-lane scheme as [`dot_lanes`].
pub fn sum_lanes<T: Scalar>(a: &[T]) -> T {
    let mut acc = [T::zero(); LANES];
    let mut ca = a.chunks_exact(LANES);
    for xa in &mut ca {
        for l in 0..LANES {
            acc[l] = acc[l] + xa[l];
        }
    }
    let mut tail = T::zero();
    for x in ca.remainder() {
        tail = tail + *x;
    }
    let mut s = T::zero();
    for v in acc {
        s = s + v;
    }
    s + tail
}

fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// Row bounds such that `pos + d` stays inside `0..len` for `pos` in the
/// returned range.
fn shifted_range(len: usize, d: isize) -> (usize, usize) {
    let lo = if d < 0 { (-d) as usize } else { 0 };
    let hi = if d > 0 {
        len.saturating_sub(d as usize)
    } else {
        len
    };
    (lo, hi.max(lo))
}

fn check_conv_shapes<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias_len: usize,
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    let [n, ic, h, w] = input.shape();
    let [oc, wic, kh, kw] = weight.shape();
    if kh != kw || kh % 2 == 0 {
        return Err(Error::Shape(format!(
            "conv kernel must be square and odd, got {kh}x{kw}"
        )));
    }
    if wic != ic {
        return Err(Error::Shape(format!(
            "conv weight expects {wic} input channels, input has {ic}"
        )));
    }
    if bias_len != oc {
        return Err(Error::Shape(format!(
            "conv bias length {bias_len} does not match {oc} output channels"
        )));
    }
    Ok((n, ic, oc, h, w, kh))
}

/// Same-padded cross-correlation (zero padding), stride 1.
pub fn conv2d<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &[T]) -> Result<Tensor<T>> {
    let (n, ic, oc, h, w, k) = check_conv_shapes(input, weight, bias.len())?;
    let p = (k / 2) as isize;
    let mut out = Tensor::zeros([n, oc, h, w]);
    for b in 0..n {
        for o in 0..oc {
            let out_plane = out.plane_mut(b, o);
            out_plane.fill(bias[o]);
            for i in 0..ic {
                let in_plane = input.plane(b, i);
                let w_tap = weight.plane(o, i);
                for ky in 0..k {
                    let dy = ky as isize - p;
                    let (y0, y1) = shifted_range(h, dy);
                    for kx in 0..k {
                        let dx = kx as isize - p;
                        let (x0, x1) = shifted_range(w, dx);
                        if x0 >= x1 {
                            continue;
                        }
                        let wgt = w_tap[ky * k + kx];
                        for y in y0..y1 {
                            let sy = (y as isize + dy) as usize;
                            let src = &in_plane[sy * w..(sy + 1) * w];
                            let dst = &mut out_plane[y * w..(y + 1) * w];
                            axpy(
                                wgt,
                                &src[(x0 as isize + dx) as usize..(x1 as isize + dx) as usize],
                                &mut dst[x0..x1],
                            );
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d`]: (input grad, weight grad, bias grad).
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Vec<T>)> {
    let (n, ic, oc, h, w, k) = check_conv_shapes(input, weight, weight.shape()[0])?;
    if grad_out.shape() != [n, oc, h, w] {
        return Err(Error::Shape(format!(
            "conv grad shape {:?} does not match output {:?}",
            grad_out.shape(),
            [n, oc, h, w]
        )));
    }
    let p = (k / 2) as isize;

    // dIn[y] += w · g[y − dy] — mirror of the forward shift.
    let mut d_in = Tensor::zeros([n, ic, h, w]);
    for b in 0..n {
        for i in 0..ic {
            let din_plane = d_in.plane_mut(b, i);
            for o in 0..oc {
                let g_plane = grad_out.plane(b, o);
                let w_tap = weight.plane(o, i);
                for ky in 0..k {
                    let dy = p - ky as isize;
                    let (y0, y1) = shifted_range(h, dy);
                    for kx in 0..k {
                        let dx = p - kx as isize;
                        let (x0, x1) = shifted_range(w, dx);
                        if x0 >= x1 {
                            continue;
                        }
                        let wgt = w_tap[ky * k + kx];
                        for y in y0..y1 {
                            let sy = (y as isize + dy) as usize;
                            let src = &g_plane[sy * w..(sy + 1) * w];
                            let dst = &mut din_plane[y * w..(y + 1) * w];
                            axpy(
                                wgt,
                                &src[(x0 as isize + dx) as usize..(x1 as isize + dx) as usize],
                                &mut dst[x0..x1],
                            );
                        }
                    }
                }
            }
        }
    }

    // dW[o,i,ky,kx] = Σ_b Σ_y g_row(y) · in_row(y+dy) over the overlap.
    let mut d_w = Tensor::zeros(weight.shape());
    for o in 0..oc {
        for i in 0..ic {
            let dw_tap = d_w.plane_mut(o, i);
            for ky in 0..k {
                let dy = ky as isize - p;
                let (y0, y1) = shifted_range(h, dy);
                for kx in 0..k {
                    let dx = kx as isize - p;
                    let (x0, x1) = shifted_range(w, dx);
                    if x0 >= x1 {
                        continue;
                    }
                    let mut acc = T::zero();
                    for b in 0..n {
                        let g_plane = grad_out.plane(b, o);
                        let in_plane = input.plane(b, i);
                        for y in y0..y1 {
                            let sy = (y as isize + dy) as usize;
                            acc = acc
                                + dot_lanes(
                                    &g_plane[y * w + x0..y * w + x1],
                                    &in_plane[sy * w + (x0 as isize + dx) as usize
                                        ..sy * w + (x1 as isize + dx) as usize],
                                );
                        }
                    }
                    dw_tap[ky * k + kx] = acc;
                }
            }
        }
    }

    let mut d_b = vec![T::zero(); oc];
    for o in 0..oc {
        let mut acc = T::zero();
        for b in 0..n {
            acc = acc + sum_lanes(grad_out.plane(b, o));
        }
        d_b[o] = acc;
    }
    Ok((d_in, d_w, d_b))
}

pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    let mut out = input.clone();
    for v in out.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    out
}

/// ReLU gradient: passes `grad` where the pre-activation is strictly
/// positive, zero elsewhere (including exactly at 0).
pub fn relu_backward<T: Scalar>(pre: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    if pre.shape() != grad.shape() {
        return Err(Error::Shape(format!(
            "relu grad shape {:?} vs pre-activation {:?}",
            grad.shape(),
            pre.shape()
        )));
    }
    let mut out = grad.clone();
    for (g, p) in out.data_mut().iter_mut().zip(pre.data()) {
        if *p <= T::zero() {
            *g = T::zero();
        }
    }
    Ok(out)
}

/// (N,4C,H,W) → (N,C,2H,2W): input channel `c·4 + 2dy + dx` at (y,x)
/// moves to channel `c` at (2y+dy, 2x+dx).
pub fn pixel_shuffle<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c4, h, w] = input.shape();
    if c4 % 4 != 0 {
        return Err(Error::Shape(format!(
            "pixel shuffle needs channels divisible by 4, got {c4}"
        )));
    }
    let c = c4 / 4;
    let mut out = Tensor::zeros([n, c, 2 * h, 2 * w]);
    for b in 0..n {
        for oc in 0..c {
            for dy in 0..2 {
                for dx in 0..2 {
                    let src = input.plane(b, oc * 4 + 2 * dy + dx);
                    let dst = out.plane_mut(b, oc);
                    for y in 0..h {
                        for x in 0..w {
                            dst[(2 * y + dy) * 2 * w + 2 * x + dx] = src[y * w + x];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Exact inverse of [`pixel_shuffle`]; also the gradient routing of the
/// shuffle (it is a permutation).
pub fn pixel_unshuffle<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h2, w2] = input.shape();
    if h2 % 2 != 0 || w2 % 2 != 0 {
        return Err(Error::Shape(format!(
            "pixel unshuffle needs even spatial dims, got {h2}x{w2}"
        )));
    }
    let (h, w) = (h2 / 2, w2 / 2);
    let mut out = Tensor::zeros([n, c * 4, h, w]);
    for b in 0..n {
        for ic in 0..c {
            for dy in 0..2 {
                for dx in 0..2 {
                    let src = input.plane(b, ic);
                    let dst = out.plane_mut(b, ic * 4 + 2 * dy + dx);
                    for y in 0..h {
                        for x in 0..w {
                            dst[y * w + x] = src[(2 * y + dy) * w2 + 2 * x + dx];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Per-(sample, channel) mean over the plane; output layout `[n·c]`.
pub fn global_avg_pool<T: Scalar>(input: &Tensor<T>) -> Vec<T> {
    let [n, c, h, w] = input.shape();
    let inv = T::from_f64(1.0 / (h * w) as f64);
    let mut out = Vec::with_capacity(n * c);
    for b in 0..n {
        for ch in 0..c {
            out.push(sum_lanes(input.plane(b, ch)) * inv);
        }
    }
    out
}

/// Gradient of [`global_avg_pool`]: spreads each pooled grad uniformly.
pub fn global_avg_pool_backward<T: Scalar>(d_pooled: &[T], shape: [usize; 4]) -> Tensor<T> {
    let [n, c, h, w] = shape;
    let inv = T::from_f64(1.0 / (h * w) as f64);
    let mut out = Tensor::zeros(shape);
    for b in 0..n {
        for ch in 0..c {
            let g = d_pooled[b * c + ch] * inv;
            for v in out.plane_mut(b, ch) {
                *v = g;
            }
        }
    }
    out
}

/// Batched fully connected layer on `[n·in_dim]` vectors (the 1×1 convs of
/// the attention head collapse to this after pooling).
pub fn fc_forward<T: Scalar>(
    x: &[T],
    weight: &Tensor<T>,
    bias: &[T],
    n: usize,
) -> Result<Vec<T>> {
    let [out_dim, in_dim, kh, kw] = weight.shape();
    if kh != 1 || kw != 1 {
        return Err(Error::Shape("fc weights must be 1x1".into()));
    }
    if x.len() != n * in_dim || bias.len() != out_dim {
        return Err(Error::Shape(format!(
            "fc input length {} for batch {n} x in_dim {in_dim}",
            x.len()
        )));
    }
    let mut out = Vec::with_capacity(n * out_dim);
    for b in 0..n {
        let xs = &x[b * in_dim..(b + 1) * in_dim];
        for j in 0..out_dim {
            let w_row = &weight.data()[j * in_dim..(j + 1) * in_dim];
            out.push(bias[j] + dot_lanes(w_row, xs));
        }
    }
    Ok(out)
}

/// Gradients of [`fc_forward`]: (input grad, weight grad, bias grad).
pub fn fc_backward<T: Scalar>(
    x: &[T],
    weight: &Tensor<T>,
    grad_out: &[T],
    n: usize,
) -> Result<(Vec<T>, Tensor<T>, Vec<T>)> {
    let [out_dim, in_dim, _, _] = weight.shape();
    if x.len() != n * in_dim || grad_out.len() != n * out_dim {
        return Err(Error::Shape(format!(
            "fc backward sizes: x {} grad {} for n={n}",
            x.len(),
            grad_out.len()
        )));
    }
    let mut d_x = vec![T::zero(); n * in_dim];
    let mut d_w = Tensor::zeros(weight.shape());
    let mut d_b = vec![T::zero(); out_dim];
    for b in 0..n {
        let xs = &x[b * in_dim..(b + 1) * in_dim];
        let gs = &grad_out[b * out_dim..(b + 1) * out_dim];
        let dxs = &mut d_x[b * in_dim..(b + 1) * in_dim];
        for j in 0..out_dim {
            let g = gs[j];
            d_b[j] += g;
            let w_row = &weight.data()[j * in_dim..(j + 1) * in_dim];
            let dw_row = &mut d_w.data_mut()[j * in_dim..(j + 1) * in_dim];
            for i in 0..in_dim {
                dxs[i] += g * w_row[i];
                dw_row[i] += g * xs[i];
            }
        }
    }
    Ok((d_x, d_w, d_b))
}

pub fn sigmoid_vec<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter()
        .map(|v| T::one() / (T::one() + (-*v).exp()))
        .collect()
}

/// Sigmoid gradient from the *output* value: g·(1−g).
pub fn sigmoid_backward_vec<T: Scalar>(gate: &[T], grad: &[T]) -> Vec<T> {
    gate.iter()
        .zip(grad)
        .map(|(g, d)| *d * *g * (T::one() - *g))
        .collect()
}

pub fn relu_vec<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter()
        .map(|v| if *v > T::zero() { *v } else { T::zero() })
        .collect()
}

pub fn relu_backward_vec<T: Scalar>(pre: &[T], grad: &[T]) -> Vec<T> {
    pre.iter()
        .zip(grad)
        .map(|(p, g)| if *p > T::zero() { *g } else { T::zero() })
        .collect()
}
