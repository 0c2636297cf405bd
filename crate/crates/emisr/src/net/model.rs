//! The SR network: head conv → residual channel-attention blocks → long
//! skip → ×2 pixel-shuffle upsampler → tail conv, with hand-rolled exact
//! reverse-mode gradients.
//!
//! This small first-order attention network is a stand-in for a much
//! larger published SR architecture; it keeps the same pipeline role (a
//! learned operator between transform stages) at desk-scale CPU cost.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ops::{
    conv2d, conv2d_backward, dot_lanes, fc_backward, fc_forward, global_avg_pool,
    global_avg_pool_backward, pixel_shuffle, pixel_unshuffle, relu, relu_backward,
    relu_backward_vec, relu_vec, sigmoid_backward_vec, sigmoid_vec,
};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Architecture hyperparameters. `scale` is fixed at 2 and `kernel` at 3.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetworkConfig {
    pub channels: usize,
    pub blocks: usize,
    pub attention_reduction: usize,
    pub scale: usize,
    pub kernel: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            channels: 32,
            blocks: 4,
            attention_reduction: 8,
            scale: 2,
            kernel: 3,
        }
    }
}

impl NetworkConfig {
    pub fn new(channels: usize, blocks: usize, attention_reduction: usize) -> Result<Self> {
        let cfg = NetworkConfig {
            channels,
            blocks,
            attention_reduction,
            ..NetworkConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.attention_reduction < 1 || self.channels < self.attention_reduction {
            return Err(Error::Config(format!(
                "need channels >= attention_reduction >= 1, got {}/{}",
                self.channels, self.attention_reduction
            )));
        }
        if self.channels % self.attention_reduction != 0 {
            return Err(Error::Config(format!(
                "channels {} must be divisible by attention_reduction {}",
                self.channels, self.attention_reduction
            )));
        }
        if self.blocks < 1 {
            return Err(Error::Config("need at least one residual block".into()));
        }
        if self.scale != 2 {
            return Err(Error::Config(format!(
                "only scale 2 is supported, got {}",
                self.scale
            )));
        }
        if self.kernel != 3 {
            return Err(Error::Config(format!(
                "only 3x3 kernels are supported, got {}",
                self.kernel
            )));
        }
        Ok(())
    }

    fn hidden(&self) -> usize {
        self.channels / self.attention_reduction
    }

    /// Canonical parameter order: (name, shape). Everything — init,
    /// checkpoints, optimizer state — follows this order.
    pub fn param_specs(&self) -> Vec<(String, [usize; 4])> {
        let (c, k, hd) = (self.channels, self.kernel, self.hidden());
        let mut specs = vec![
            ("head.weight".to_string(), [c, 1, k, k]),
            ("head.bias".to_string(), [c, 1, 1, 1]),
        ];
        for i in 0..self.blocks {
            specs.push((format!("block{i}.conv1.weight"), [c, c, k, k]));
            specs.push((format!("block{i}.conv1.bias"), [c, 1, 1, 1]));
            specs.push((format!("block{i}.conv2.weight"), [c, c, k, k]));
            specs.push((format!("block{i}.conv2.bias"), [c, 1, 1, 1]));
            specs.push((format!("block{i}.att.fc1.weight"), [hd, c, 1, 1]));
            specs.push((format!("block{i}.att.fc1.bias"), [hd, 1, 1, 1]));
            specs.push((format!("block{i}.att.fc2.weight"), [c, hd, 1, 1]));
            specs.push((format!("block{i}.att.fc2.bias"), [c, 1, 1, 1]));
        }
        specs.push(("up.weight".to_string(), [4 * c, c, k, k]));
        specs.push(("up.bias".to_string(), [4 * c, 1, 1, 1]));
        specs.push(("tail.weight".to_string(), [1, c, k, k]));
        specs.push(("tail.bias".to_string(), [1, 1, 1, 1]));
        specs
    }
}

// Parameter indices relative to the spec order.
const HEAD_W: usize = 0;
const HEAD_B: usize = 1;
const BLOCK_BASE: usize = 2;
const BLOCK_STRIDE: usize = 8;

/// The network: a config plus parameter tensors in spec order.
#[derive(Clone, Debug, PartialEq)]
pub struct SrNetwork<T> {
    pub config: NetworkConfig,
    pub params: Vec<Tensor<T>>,
}

/// Retained intermediates of one forward pass, consumed by [`SrNetwork::backward`].
pub struct ForwardTrace<T> {
    input: Tensor<T>,
    blocks: Vec<BlockTrace<T>>,
    body: Tensor<T>,
    shuffled: Tensor<T>,
    batch: usize,
}

struct BlockTrace<T> {
    block_in: Tensor<T>,
    conv1_pre: Tensor<T>,
    relu1: Tensor<T>,
    conv2: Tensor<T>,
    pooled: Vec<T>,
    fc1_pre: Vec<T>,
    fc1_relu: Vec<T>,
    gate: Vec<T>,
}

impl<T: Scalar> SrNetwork<T> {
    /// He-normal init (std = √(2/fan_in)) for weights, zero biases;
    /// deterministic under `seed`. Draws are made in f64 and narrowed, so
    /// an f32 and an f64 network from the same seed agree exactly.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for (name, shape) in config.param_specs() {
            if name.ends_with(".bias") {
                params.push(Tensor::zeros(shape));
                continue;
            }
            let fan_in = shape[1] * shape[2] * shape[3];
            let dist = Normal::new(0.0f64, (2.0 / fan_in as f64).sqrt()).unwrap();
            let data = (0..shape.iter().product::<usize>())
                .map(|_| T::from_f64(dist.sample(&mut rng) as f32 as f64))
                .collect();
            params.push(Tensor::from_vec(shape, data)?);
        }
        Ok(SrNetwork { config, params })
    }

    pub fn from_params(config: NetworkConfig, params: Vec<Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let specs = config.param_specs();
        if params.len() != specs.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter tensors, got {}",
                specs.len(),
                params.len()
            )));
        }
        for ((name, shape), p) in specs.iter().zip(&params) {
            if p.shape() != *shape {
                return Err(Error::Shape(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    p.shape()
                )));
            }
        }
        Ok(SrNetwork { config, params })
    }

    fn block_param(&self, block: usize, slot: usize) -> &Tensor<T> {
        &self.params[BLOCK_BASE + block * BLOCK_STRIDE + slot]
    }

    fn up_w(&self) -> &Tensor<T> {
        &self.params[BLOCK_BASE + self.config.blocks * BLOCK_STRIDE]
    }
    fn up_b(&self) -> &Tensor<T> {
        &self.params[BLOCK_BASE + self.config.blocks * BLOCK_STRIDE + 1]
    }
    fn tail_w(&self) -> &Tensor<T> {
        &self.params[BLOCK_BASE + self.config.blocks * BLOCK_STRIDE + 2]
    }
    fn tail_b(&self) -> &Tensor<T> {
        &self.params[BLOCK_BASE + self.config.blocks * BLOCK_STRIDE + 3]
    }

    /// SR forward pass: (N,1,H,W) → (N,1,2H,2W).
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_traced(input)?.0)
    }

    pub fn forward_traced(&self, input: &Tensor<T>) -> Result<(Tensor<T>, ForwardTrace<T>)> {
        let [n, c_in, _, _] = input.shape();
        if c_in != 1 {
            return Err(Error::Shape(format!(
                "network input must be single-channel, got {c_in}"
            )));
        }
        if !input.is_all_finite() {
            return Err(Error::Numeric("non-finite value in network input".into()));
        }
        let ensure = |t: &Tensor<T>, layer: &str| -> Result<()> {
            if t.is_all_finite() {
                Ok(())
            } else {
                Err(Error::Numeric(format!(
                    "non-finite activation after layer `{layer}`"
                )))
            }
        };

        let head = conv2d(input, &self.params[HEAD_W], self.params[HEAD_B].data())?;
        ensure(&head, "head")?;

        let mut x = head.clone();
        let mut blocks = Vec::with_capacity(self.config.blocks);
        for i in 0..self.config.blocks {
            let block_in = x;
            let conv1_pre = conv2d(&block_in, self.block_param(i, 0), self.block_param(i, 1).data())?;
            let relu1 = relu(&conv1_pre);
            let conv2 = conv2d(&relu1, self.block_param(i, 2), self.block_param(i, 3).data())?;
            let pooled = global_avg_pool(&conv2);
            let fc1_pre = fc_forward(&pooled, self.block_param(i, 4), self.block_param(i, 5).data(), n)?;
            let fc1_relu = relu_vec(&fc1_pre);
            let fc2_pre = fc_forward(&fc1_relu, self.block_param(i, 6), self.block_param(i, 7).data(), n)?;
            let gate = sigmoid_vec(&fc2_pre);

            // block_out = block_in + gate ⊙ conv2 (gate broadcast per channel)
            let mut out = block_in.clone();
            let c = self.config.channels;
            for b in 0..n {
                for ch in 0..c {
                    let g = gate[b * c + ch];
                    let src = conv2.plane(b, ch);
                    let dst = out.plane_mut(b, ch);
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += g * *s;
                    }
                }
            }
            ensure(&out, &format!("block{i}"))?;
            blocks.push(BlockTrace {
                block_in,
                conv1_pre,
                relu1,
                conv2,
                pooled,
                fc1_pre,
                fc1_relu,
                gate,
            });
            x = out;
        }

        let mut body = x;
        body.add_assign_elementwise(&head)?;
        let up = conv2d(&body, self.up_w(), self.up_b().data())?;
        ensure(&up, "up")?;
        let shuffled = pixel_shuffle(&up)?;
        let output = conv2d(&shuffled, self.tail_w(), self.tail_b().data())?;
        ensure(&output, "tail")?;

        let trace = ForwardTrace {
            input: input.clone(),
            blocks,
            body,
            shuffled,
            batch: n,
        };
        Ok((output, trace))
    }

    /// Exact reverse-mode gradients for every parameter (in spec order)
    /// plus the input gradient. Consumes the trace of the matching
    /// forward pass.
    pub fn backward(
        &self,
        trace: &ForwardTrace<T>,
        grad_out: &Tensor<T>,
    ) -> Result<(Vec<Tensor<T>>, Tensor<T>)> {
        let [n, _, h, w] = trace.input.shape();
        if grad_out.shape() != [n, 1, 2 * h, 2 * w] {
            return Err(Error::Shape(format!(
                "upstream grad shape {:?} does not match output {:?}",
                grad_out.shape(),
                [n, 1, 2 * h, 2 * w]
            )));
        }
        let c = self.config.channels;
        let mut grads: Vec<Tensor<T>> = self
            .config
            .param_specs()
            .iter()
            .map(|(_, s)| Tensor::zeros(*s))
            .collect();

        let (d_shuffled, d_tail_w, d_tail_b) =
            conv2d_backward(&trace.shuffled, self.tail_w(), grad_out)?;
        let tail_idx = BLOCK_BASE + self.config.blocks * BLOCK_STRIDE + 2;
        grads[tail_idx] = d_tail_w;
        grads[tail_idx + 1] = Tensor::from_vec([1, 1, 1, 1], d_tail_b)?;

        let d_up = pixel_unshuffle(&d_shuffled)?;
        let (d_body, d_up_w, d_up_b) = conv2d_backward(&trace.body, self.up_w(), &d_up)?;
        let up_idx = BLOCK_BASE + self.config.blocks * BLOCK_STRIDE;
        grads[up_idx] = d_up_w;
        grads[up_idx + 1] = Tensor::from_vec([4 * c, 1, 1, 1], d_up_b)?;

        // Long skip: body = last block out + head.
        let mut d_x = d_body.clone();
        let mut d_head = d_body;

        for i in (0..self.config.blocks).rev() {
            let bt = &trace.blocks[i];
            let base = BLOCK_BASE + i * BLOCK_STRIDE;

            // block_out = block_in + gate ⊙ conv2
            let mut d_conv2 = Tensor::zeros(bt.conv2.shape());
            let mut d_gate = vec![T::zero(); n * c];
            for b in 0..n {
                for ch in 0..c {
                    let g = bt.gate[b * c + ch];
                    let up_plane = d_x.plane(b, ch);
                    let z_plane = bt.conv2.plane(b, ch);
                    let dz_plane = d_conv2.plane_mut(b, ch);
                    for (d, u) in dz_plane.iter_mut().zip(up_plane) {
                        *d = g * *u;
                    }
                    d_gate[b * c + ch] = dot_lanes(up_plane, z_plane);
                }
            }

            // Attention chain: gate = σ(fc2(relu(fc1(gap(conv2))))).
            let d_fc2_pre = sigmoid_backward_vec(&bt.gate, &d_gate);
            let (d_fc1_relu, d_fc2_w, d_fc2_b) =
                fc_backward(&bt.fc1_relu, self.block_param(i, 6), &d_fc2_pre, n)?;
            grads[base + 6] = d_fc2_w;
            grads[base + 7] = Tensor::from_vec([c, 1, 1, 1], d_fc2_b)?;
            let d_fc1_pre = relu_backward_vec(&bt.fc1_pre, &d_fc1_relu);
            let (d_pooled, d_fc1_w, d_fc1_b) =
                fc_backward(&bt.pooled, self.block_param(i, 4), &d_fc1_pre, n)?;
            grads[base + 4] = d_fc1_w;
            grads[base + 5] = Tensor::from_vec([self.config.hidden(), 1, 1, 1], d_fc1_b)?;
            d_conv2.add_assign_elementwise(&global_avg_pool_backward(&d_pooled, bt.conv2.shape()))?;

            let (d_relu1, d_conv2_w, d_conv2_b) =
                conv2d_backward(&bt.relu1, self.block_param(i, 2), &d_conv2)?;
            grads[base + 2] = d_conv2_w;
            grads[base + 3] = Tensor::from_vec([c, 1, 1, 1], d_conv2_b)?;
            let d_conv1_pre = relu_backward(&bt.conv1_pre, &d_relu1)?;
            let (d_block_in, d_conv1_w, d_conv1_b) =
                conv2d_backward(&bt.block_in, self.block_param(i, 0), &d_conv1_pre)?;
            grads[base] = d_conv1_w;
            grads[base + 1] = Tensor::from_vec([c, 1, 1, 1], d_conv1_b)?;

            // Residual: d(block_in) = d(block_out) + conv-path grad.
            d_x.add_assign_elementwise(&d_block_in)?;
        }

        d_head.add_assign_elementwise(&d_x)?;
        let (d_input, d_head_w, d_head_b) =
            conv2d_backward(&trace.input, &self.params[HEAD_W], &d_head)?;
        grads[HEAD_W] = d_head_w;
        grads[HEAD_B] = Tensor::from_vec([c, 1, 1, 1], d_head_b)?;
        Ok((grads, d_input))
    }

    pub fn cast<U: Scalar>(&self) -> SrNetwork<U> {
        SrNetwork {
            config: self.config,
            params: self.params.iter().map(|p| p.cast()).collect(),
        }
    }
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Hand-built network that reproduces its input as a nearest-neighbor ×2
/// upsample, used by tests across modules: the head copies the input into
/// every channel via Dirac kernels, the residual blocks contribute zero
/// (their conv weights are zero) while each attention gate is forced to
/// ≈1, the up conv halves the doubled long-skip signal into all four
/// shuffle phases, and the tail picks channel 0.
#[cfg(test)]
pub(crate) fn dirac_identity_net(config: NetworkConfig) -> SrNetwork<f32> {
    let mut params: Vec<Tensor<f32>> = config
        .param_specs()
        .iter()
        .map(|(_, s)| Tensor::zeros(*s))
        .collect();
    let k = config.kernel;
    let center = (k / 2) * k + k / 2;
    let c = config.channels;
    // head: every output channel = input (Dirac on the single input channel)
    for o in 0..c {
        params[HEAD_W].plane_mut(o, 0)[center] = 1.0;
    }
    // attention gate ≈ 1 in every block: large fc2 bias, all convs zero
    for b in 0..config.blocks {
        for v in params[BLOCK_BASE + b * BLOCK_STRIDE + 7].data_mut() {
            *v = 40.0;
        }
    }
    // up: each output channel = 0.5 × channel 0 of the (doubled) body
    let up_idx = BLOCK_BASE + config.blocks * BLOCK_STRIDE;
    for o in 0..4 * c {
        params[up_idx].plane_mut(o, 0)[center] = 0.5;
    }
    // tail: channel 0 Dirac
    params[up_idx + 2].plane_mut(0, 0)[center] = 1.0;
    SrNetwork::from_params(config, params).unwrap()
}
