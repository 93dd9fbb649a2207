//! Stage-1 latent-information frequency-domain extractor.
//!
//! Per-frame image features are split along the channel axis into a
//! low-frequency and a high-frequency half. The low half goes through
//! temporal attention (a strong low-pass filter, capturing global structure
//! such as overall motion), the high half through a depthwise convolution
//! (a high-pass filter, capturing local detail). The processed halves are
//! merged back through the inverse wavelet transform, restoring the
//! original channel width, and a GRU condenses the merged sequence into a
//! single temporal feature vector.

use crate::error::{Error, Result};
use crate::init::uniform_tensor;
use crate::tensor::{
    conv1d_depthwise, matmul, softmax_rows, transpose2, Axis, CountingContext, Tensor,
};
use crate::wavelet::{dwt_haar, idwt_haar, WaveletPair};

/// Per-frame feature matrix `T x C_img`.
#[derive(Debug, Clone)]
pub struct FeatureSequence {
    frames: Tensor,
}

impl FeatureSequence {
    pub fn new(frames: Tensor) -> Result<Self> {
        if frames.rank() != 2 {
            return Err(Error::Dimension(format!(
                "feature sequence must be [t, c_img], got {:?}",
                frames.shape()
            )));
        }
        if frames.shape()[1] % 2 != 0 {
            return Err(Error::Dimension(format!(
                "c_img must be even for the channel-axis wavelet split, got {}; \
                 pad the channel axis before ingesting",
                frames.shape()[1]
            )));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &Tensor {
        &self.frames
    }

    pub fn t(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn c_img(&self) -> usize {
        self.frames.shape()[1]
    }
}

/// Output of the extractor: merged per-frame features plus the temporal
/// vector produced by the GRU.
#[derive(Debug, Clone)]
pub struct HybridFeatures {
    /// Same shape as the input features.
    pub per_frame: Tensor,
    /// Final GRU hidden state, rank 1.
    pub temporal: Tensor,
}

/// Single-layer GRU parameters. Gates follow the classic formulation:
///
/// ```text
/// z = sigmoid(x W_z + h U_z + b_z)
/// r = sigmoid(x W_r + h U_r + b_r)
/// n = tanh(x W_n + (r . h) U_n + b_n)
/// h' = (1 - z) . h + z . n
/// ```
#[derive(Debug, Clone)]
pub struct GruWeights {
    pub w_update: Tensor,
    pub w_reset: Tensor,
    pub w_cand: Tensor,
    pub u_update: Tensor,
    pub u_reset: Tensor,
    pub u_cand: Tensor,
    pub b_update: Tensor,
    pub b_reset: Tensor,
    pub b_cand: Tensor,
}

impl GruWeights {
    pub fn seeded(rng: &mut dyn rand::RngCore, c_in: usize, hidden: usize) -> Self {
        Self {
            w_update: uniform_tensor(rng, &[c_in, hidden]),
            w_reset: uniform_tensor(rng, &[c_in, hidden]),
            w_cand: uniform_tensor(rng, &[c_in, hidden]),
            u_update: uniform_tensor(rng, &[hidden, hidden]),
            u_reset: uniform_tensor(rng, &[hidden, hidden]),
            u_cand: uniform_tensor(rng, &[hidden, hidden]),
            b_update: uniform_tensor(rng, &[hidden]),
            b_reset: uniform_tensor(rng, &[hidden]),
            b_cand: uniform_tensor(rng, &[hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.u_update.shape()[0]
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            w_update: self.w_update.scale(s),
            w_reset: self.w_reset.scale(s),
            w_cand: self.w_cand.scale(s),
            u_update: self.u_update.scale(s),
            u_reset: self.u_reset.scale(s),
            u_cand: self.u_cand.scale(s),
            b_update: self.b_update.scale(s),
            b_reset: self.b_reset.scale(s),
            b_cand: self.b_cand.scale(s),
        }
    }

    pub fn scalar_count(&self) -> u64 {
        [
            &self.w_update,
            &self.w_reset,
            &self.w_cand,
            &self.u_update,
            &self.u_reset,
            &self.u_cand,
            &self.b_update,
            &self.b_reset,
            &self.b_cand,
        ]
        .iter()
        .map(|t| t.len() as u64)
        .sum()
    }

    fn validate(&self, c_in: usize) -> Result<()> {
        let h = self.hidden();
        for (t, name, shape) in [
            (&self.w_update, "w_update", [c_in, h]),
            (&self.w_reset, "w_reset", [c_in, h]),
            (&self.w_cand, "w_cand", [c_in, h]),
            (&self.u_update, "u_update", [h, h]),
            (&self.u_reset, "u_reset", [h, h]),
            (&self.u_cand, "u_cand", [h, h]),
        ] {
            if t.shape() != shape {
                return Err(Error::Dimension(format!(
                    "gru {name} must be {shape:?}, got {:?}",
                    t.shape()
                )));
            }
        }
        for (t, name) in [
            (&self.b_update, "b_update"),
            (&self.b_reset, "b_reset"),
            (&self.b_cand, "b_cand"),
        ] {
            if t.shape() != [h] {
                return Err(Error::Dimension(format!(
                    "gru {name} must be [{h}], got {:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }
}

/// All stage-1 weights: attention projections over the low half, the
/// high-branch conv kernel, and the GRU encoder.
#[derive(Debug, Clone)]
pub struct LifdWeights {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub conv_kernel: Tensor,
    pub gru: GruWeights,
}

impl LifdWeights {
    pub fn seeded(
        rng: &mut dyn rand::RngCore,
        c_img: usize,
        c_hidden: usize,
        kernel_len: usize,
    ) -> Self {
        let half = c_img / 2;
        Self {
            w_q: uniform_tensor(rng, &[half, half]),
            w_k: uniform_tensor(rng, &[half, half]),
            w_v: uniform_tensor(rng, &[half, half]),
            conv_kernel: uniform_tensor(rng, &[kernel_len]),
            gru: GruWeights::seeded(rng, c_img, c_hidden),
        }
    }

    pub fn scalar_count(&self) -> u64 {
        (self.w_q.len() + self.w_k.len() + self.w_v.len() + self.conv_kernel.len()) as u64
            + self.gru.scalar_count()
    }
}

/// Channel-axis wavelet split of the feature sequence.
pub fn decompose(f: &FeatureSequence) -> Result<WaveletPair> {
    dwt_haar(f.frames(), Axis::Cols)
}

/// Temporal attention over the low-frequency half: the `T` frames are the
/// tokens, `d_k = C_img / 2`.
pub fn low_branch_attention(
    ctx: &mut CountingContext,
    low: &Tensor,
    w: &LifdWeights,
) -> Result<Tensor> {
    if low.rank() != 2 {
        return Err(Error::Dimension(format!(
            "low branch expects [t, c/2], got {:?}",
            low.shape()
        )));
    }
    let half = low.shape()[1];
    for (m, name) in [(&w.w_q, "W_Q"), (&w.w_k, "W_K"), (&w.w_v, "W_V")] {
        if m.shape() != [half, half] {
            return Err(Error::Dimension(format!(
                "{name} must be [{half}, {half}], got {:?}",
                m.shape()
            )));
        }
    }
    let q = matmul(ctx, low, &w.w_q)?;
    let k = matmul(ctx, low, &w.w_k)?;
    let v = matmul(ctx, low, &w.w_v)?;
    let scores = matmul(ctx, &q, &transpose2(&k)?)?.scale(1.0 / (half as f64).sqrt());
    matmul(ctx, &softmax_rows(&scores)?, &v)
}

/// Depthwise convolution along the channel axis of every frame of the
/// high-frequency half.
pub fn high_branch_conv(
    ctx: &mut CountingContext,
    high: &Tensor,
    w: &LifdWeights,
) -> Result<Tensor> {
    if high.rank() != 2 {
        return Err(Error::Dimension(format!(
            "high branch expects [t, c/2], got {:?}",
            high.shape()
        )));
    }
    let (t, half) = (high.shape()[0], high.shape()[1]);
    let mut out = Vec::with_capacity(t * half);
    for i in 0..t {
        let row = Tensor::new(&[half], high.row(i).to_vec())?;
        out.extend_from_slice(conv1d_depthwise(ctx, &row, &w.conv_kernel)?.data());
    }
    Tensor::new(&[t, half], out)
}

/// Inverse wavelet merge of the two processed halves, restoring the
/// original channel width.
pub fn merge(global: &Tensor, local: &Tensor) -> Result<Tensor> {
    idwt_haar(&WaveletPair::from_halves(
        global.clone(),
        local.clone(),
        Axis::Cols,
    )?)
}

/// Run the GRU over the merged sequence and return the final hidden state.
pub fn gru_encode(ctx: &mut CountingContext, hybrid: &Tensor, w: &GruWeights) -> Result<Tensor> {
    if hybrid.rank() != 2 {
        return Err(Error::Dimension(format!(
            "gru_encode expects [t, c], got {:?}",
            hybrid.shape()
        )));
    }
    let (t, c) = (hybrid.shape()[0], hybrid.shape()[1]);
    w.validate(c)?;
    let h_dim = w.hidden();
    let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());
    let mut h = Tensor::zeros(&[1, h_dim])?;
    for step in 0..t {
        let x = Tensor::new(&[1, c], hybrid.row(step).to_vec())?;
        let z = matmul(ctx, &x, &w.w_update)?
            .add(&matmul(ctx, &h, &w.u_update)?)?
            .add(&w.b_update.reshape(&[1, h_dim])?)?
            .map(sigmoid);
        let r = matmul(ctx, &x, &w.w_reset)?
            .add(&matmul(ctx, &h, &w.u_reset)?)?
            .add(&w.b_reset.reshape(&[1, h_dim])?)?
            .map(sigmoid);
        let gated = r.zip_map(&h, |a, b| a * b)?;
        let cand = matmul(ctx, &x, &w.w_cand)?
            .add(&matmul(ctx, &gated, &w.u_cand)?)?
            .add(&w.b_cand.reshape(&[1, h_dim])?)?
            .map(f64::tanh);
        h = h
            .zip_map(&z, |hv, zv| (1.0 - zv) * hv)?
            .add(&z.zip_map(&cand, |zv, nv| zv * nv)?)?;
    }
    h.reshape(&[h_dim])
}

/// Full stage-1 pass: split, filter both branches, merge, encode.
pub fn run_lifd(
    ctx: &mut CountingContext,
    f: &FeatureSequence,
    w: &LifdWeights,
) -> Result<HybridFeatures> {
    let pair = decompose(f)?;
    let global = low_branch_attention(ctx, &pair.low, w)?;
    let local = high_branch_conv(ctx, &pair.high, w)?;
    let per_frame = merge(&global, &local)?;
    let temporal = gru_encode(ctx, &per_frame, &w.gru)?;
    Ok(HybridFeatures {
        per_frame,
        temporal,
    })
}
