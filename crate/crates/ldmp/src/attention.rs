//! Interaction kernels: dense self/cross attention baselines and the pooled
//! low-dimensional self-perception (LSP) and collaborative-perception (LCP)
//! kernels that replace them.
//!
//! All four kernels operate on rank-3 `B x N x C` tensors, bill their MACs
//! through the shared [`CountingContext`], and apply a final pointwise
//! channel map (`out_map`, a 1x1 convolution realized as a `C x C` matrix).
//! LSP and LCP contain no softmax and no score scaling: they consist of
//! adaptive pooling, dot products and the channel map only.

use crate::error::{Error, Result};
use crate::init::uniform_tensor;
use crate::tensor::{
    adaptive_avg_pool, matmul, softmax_rows, transpose2, Axis, CountingContext, Tensor,
};

/// Learnable maps for one interaction kernel.
///
/// Which fields are populated depends on the kernel kind: the attention
/// baselines and LCP use `w_q`/`w_k`/`w_v` plus `out_map`; LSP pools its
/// input directly and owns only `out_map` (plus an optional `input_map`).
#[derive(Debug, Clone)]
pub struct KernelWeights {
    pub w_q: Option<Tensor>,
    pub w_k: Option<Tensor>,
    pub w_v: Option<Tensor>,
    /// Optional pointwise pre-map for LSP.
    pub input_map: Option<Tensor>,
    /// Final pointwise channel map.
    pub out_map: Tensor,
    pub b_q: Option<Tensor>,
    pub b_k: Option<Tensor>,
    pub b_v: Option<Tensor>,
    pub b_out: Option<Tensor>,
}

/// Kernel kinds understood by the cost model and the report generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    SelfAttention,
    CrossAttention,
    Lsp,
    Lcp,
}

impl KernelKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "self-attention" => Ok(Self::SelfAttention),
            "cross-attention" => Ok(Self::CrossAttention),
            "lsp" => Ok(Self::Lsp),
            "lcp" => Ok(Self::Lcp),
            other => Err(Error::Config(format!("unknown kernel kind '{other}'"))),
        }
    }
}

impl KernelWeights {
    /// QKV + output map bundle for the attention baselines.
    pub fn attention(c: usize, biases: bool, rng: &mut dyn rand::RngCore) -> Self {
        Self {
            w_q: Some(uniform_tensor(rng, &[c, c])),
            w_k: Some(uniform_tensor(rng, &[c, c])),
            w_v: Some(uniform_tensor(rng, &[c, c])),
            input_map: None,
            out_map: uniform_tensor(rng, &[c, c]),
            b_q: biases.then(|| uniform_tensor(rng, &[c])),
            b_k: biases.then(|| uniform_tensor(rng, &[c])),
            b_v: biases.then(|| uniform_tensor(rng, &[c])),
            b_out: biases.then(|| uniform_tensor(rng, &[c])),
        }
    }

    /// LCP uses the same bundle layout as the attention baselines.
    pub fn lcp(c: usize, biases: bool, rng: &mut dyn rand::RngCore) -> Self {
        Self::attention(c, biases, rng)
    }

    /// Output map only (plus optional input map and output bias).
    pub fn lsp(c: usize, bias: bool, input_map: bool, rng: &mut dyn rand::RngCore) -> Self {
        Self {
            w_q: None,
            w_k: None,
            w_v: None,
            input_map: input_map.then(|| uniform_tensor(rng, &[c, c])),
            out_map: uniform_tensor(rng, &[c, c]),
            b_q: None,
            b_k: None,
            b_v: None,
            b_out: bias.then(|| uniform_tensor(rng, &[c])),
        }
    }

    /// Multiply every tensor in the bundle by `s` (handy for zeroing).
    pub fn scaled(&self, s: f64) -> Self {
        let m = |t: &Option<Tensor>| t.as_ref().map(|t| t.scale(s));
        Self {
            w_q: m(&self.w_q),
            w_k: m(&self.w_k),
            w_v: m(&self.w_v),
            input_map: m(&self.input_map),
            out_map: self.out_map.scale(s),
            b_q: m(&self.b_q),
            b_k: m(&self.b_k),
            b_v: m(&self.b_v),
            b_out: m(&self.b_out),
        }
    }

    /// Number of scalar values stored in the bundle.
    pub fn scalar_count(&self) -> u64 {
        let c = |t: &Option<Tensor>| t.as_ref().map_or(0, |t| t.len() as u64);
        c(&self.w_q)
            + c(&self.w_k)
            + c(&self.w_v)
            + c(&self.input_map)
            + self.out_map.len() as u64
            + c(&self.b_q)
            + c(&self.b_k)
            + c(&self.b_v)
            + c(&self.b_out)
    }
}

fn require_square<'a>(t: Option<&'a Tensor>, name: &str, c: usize) -> Result<&'a Tensor> {
    match t {
        Some(t) if t.shape() == [c, c] => Ok(t),
        Some(t) => Err(Error::Dimension(format!(
            "{name} must be [{c}, {c}], got {:?}",
            t.shape()
        ))),
        None => Err(Error::Dimension(format!("{name} is missing"))),
    }
}

fn add_row_bias(x: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let Some(b) = bias else {
        return Ok(x.clone());
    };
    if b.rank() != 1 || b.shape()[0] != x.shape()[1] {
        return Err(Error::Dimension(format!(
            "bias {:?} does not match row width of {:?}",
            b.shape(),
            x.shape()
        )));
    }
    let cols = x.shape()[1];
    let mut out = x.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v += b.data()[i % cols];
    }
    Ok(out)
}

fn project(
    ctx: &mut CountingContext,
    x: &Tensor,
    w: &Tensor,
    bias: Option<&Tensor>,
) -> Result<Tensor> {
    add_row_bias(&matmul(ctx, x, w)?, bias)
}

fn check_rank3(x: &Tensor, what: &str) -> Result<()> {
    if x.rank() != 3 {
        return Err(Error::Dimension(format!(
            "{what} expects a rank-3 [batch, tokens, channels] tensor, got {:?}",
            x.shape()
        )));
    }
    Ok(())
}

fn stack_batches(slices: Vec<Tensor>) -> Result<Tensor> {
    let (m, n) = (slices[0].shape()[0], slices[0].shape()[1]);
    let mut data = Vec::with_capacity(slices.len() * m * n);
    for s in &slices {
        data.extend_from_slice(s.data());
    }
    Tensor::new(&[slices.len(), m, n], data)
}

/// Dense scaled-dot-product self-attention with a final channel map.
///
/// Per batch slice: `softmax((X W_q)(X W_k)^T / sqrt(C)) (X W_v) W_out`.
/// Bills `B * (4NC^2 + 2N^2C)` MACs.
pub fn self_attention(ctx: &mut CountingContext, x: &Tensor, w: &KernelWeights) -> Result<Tensor> {
    check_rank3(x, "self_attention")?;
    cross_like(ctx, x, x, w, "self_attention")
}

/// Dense cross-attention: queries from `xq`, keys/values from `xkv`.
/// Bills `B * (2 N_q C^2 + 2 N_kv C^2 + 2 N_q N_kv C)` MACs.
pub fn cross_attention(
    ctx: &mut CountingContext,
    xq: &Tensor,
    xkv: &Tensor,
    w: &KernelWeights,
) -> Result<Tensor> {
    check_rank3(xq, "cross_attention")?;
    check_rank3(xkv, "cross_attention")?;
    if xq.shape()[0] != xkv.shape()[0] {
        return Err(Error::Dimension(format!(
            "cross_attention batch extents differ: {:?} vs {:?}",
            xq.shape(),
            xkv.shape()
        )));
    }
    if xq.shape()[2] != xkv.shape()[2] {
        return Err(Error::Dimension(format!(
            "cross_attention channel extents differ: {:?} vs {:?}",
            xq.shape(),
            xkv.shape()
        )));
    }
    cross_like(ctx, xq, xkv, w, "cross_attention")
}

fn cross_like(
    ctx: &mut CountingContext,
    xq: &Tensor,
    xkv: &Tensor,
    w: &KernelWeights,
    what: &str,
) -> Result<Tensor> {
    let c = xq.shape()[2];
    let w_q = require_square(w.w_q.as_ref(), &format!("{what}: W_Q"), c)?;
    let w_k = require_square(w.w_k.as_ref(), &format!("{what}: W_K"), c)?;
    let w_v = require_square(w.w_v.as_ref(), &format!("{what}: W_V"), c)?;
    let w_out = require_square(Some(&w.out_map), &format!("{what}: out_map"), c)?;
    let scale = 1.0 / (c as f64).sqrt();
    let mut outs = Vec::with_capacity(xq.shape()[0]);
    for b in 0..xq.shape()[0] {
        let q = project(ctx, &xq.batch(b)?, w_q, w.b_q.as_ref())?;
        let kv = xkv.batch(b)?;
        let k = project(ctx, &kv, w_k, w.b_k.as_ref())?;
        let v = project(ctx, &kv, w_v, w.b_v.as_ref())?;
        let scores = matmul(ctx, &q, &transpose2(&k)?)?.scale(scale);
        let attn = softmax_rows(&scores)?;
        let mixed = matmul(ctx, &attn, &v)?;
        outs.push(project(ctx, &mixed, w_out, w.b_out.as_ref())?);
    }
    stack_batches(outs)
}

fn check_reduction(r: usize, limits: &[(usize, &str)]) -> Result<()> {
    if r < 1 {
        return Err(Error::Range("reduced extent r must be >= 1".into()));
    }
    for &(limit, name) in limits {
        if r > limit {
            return Err(Error::Range(format!(
                "reduced extent r={r} exceeds {name}={limit}"
            )));
        }
    }
    Ok(())
}

/// Low-dimensional self-perception: pool the input along channels and along
/// tokens, multiply the two reductions, then apply the channel map.
///
/// Bills `B * (2NC + NCr + NC^2)` MACs, plus `B * NC^2` when the optional
/// input map is present.
pub fn lsp(ctx: &mut CountingContext, x: &Tensor, r: usize, w: &KernelWeights) -> Result<Tensor> {
    check_rank3(x, "lsp")?;
    let (n, c) = (x.shape()[1], x.shape()[2]);
    check_reduction(r, &[(n, "token count N"), (c, "channel count C")])?;
    let w_out = require_square(Some(&w.out_map), "lsp: out_map", c)?;
    let w_in = match &w.input_map {
        Some(m) => Some(require_square(Some(m), "lsp: input_map", c)?),
        None => None,
    };
    let mut outs = Vec::with_capacity(x.shape()[0]);
    for b in 0..x.shape()[0] {
        let mut x2 = x.batch(b)?;
        if let Some(m) = w_in {
            x2 = matmul(ctx, &x2, m)?;
        }
        let channel_dr = adaptive_avg_pool(ctx, &x2, r, Axis::Cols)?; // N x r
        let number_dr = adaptive_avg_pool(ctx, &x2, r, Axis::Rows)?; // r x C
        let bilinear = matmul(ctx, &channel_dr, &number_dr)?; // N x C
        outs.push(project(ctx, &bilinear, w_out, w.b_out.as_ref())?);
    }
    stack_batches(outs)
}

/// Low-dimensional collaborative perception between a query set (mesh or
/// pose tokens) and a key/value set.
///
/// Queries and keys are pooled along both the token axis and the channel
/// axis; the pooled factors interact through dot products to form the
/// `N_kv x N_q` interaction weights, which are transposed and applied to
/// the values. Bills
/// `B * (2 N_q C^2 + 2 N_kv C^2 + 2 (N_q+N_kv) C + (N_q+N_kv) C r + 2 N_q N_kv C)`
/// MACs.
pub fn lcp(
    ctx: &mut CountingContext,
    xq: &Tensor,
    xkv: &Tensor,
    r: usize,
    w: &KernelWeights,
) -> Result<Tensor> {
    check_rank3(xq, "lcp")?;
    check_rank3(xkv, "lcp")?;
    if xq.shape()[0] != xkv.shape()[0] {
        return Err(Error::Dimension(format!(
            "lcp batch extents differ: {:?} vs {:?}",
            xq.shape(),
            xkv.shape()
        )));
    }
    let c = xq.shape()[2];
    if xkv.shape()[2] != c {
        return Err(Error::Dimension(format!(
            "lcp channel extents differ: {:?} vs {:?}",
            xq.shape(),
            xkv.shape()
        )));
    }
    let (n_q, n_kv) = (xq.shape()[1], xkv.shape()[1]);
    check_reduction(
        r,
        &[
            (n_q, "query token count N_q"),
            (n_kv, "key/value token count N_kv"),
            (c, "channel count C"),
        ],
    )?;
    let w_q = require_square(w.w_q.as_ref(), "lcp: W_Q", c)?;
    let w_k = require_square(w.w_k.as_ref(), "lcp: W_K", c)?;
    let w_v = require_square(w.w_v.as_ref(), "lcp: W_V", c)?;
    let w_out = require_square(Some(&w.out_map), "lcp: out_map", c)?;
    let mut outs = Vec::with_capacity(xq.shape()[0]);
    for b in 0..xq.shape()[0] {
        let q = project(ctx, &xq.batch(b)?, w_q, w.b_q.as_ref())?;
        let kv = xkv.batch(b)?;
        let k = project(ctx, &kv, w_k, w.b_k.as_ref())?;
        let v = project(ctx, &kv, w_v, w.b_v.as_ref())?;
        let q1 = adaptive_avg_pool(ctx, &q, r, Axis::Cols)?; // N_q x r
        let q2 = adaptive_avg_pool(ctx, &q, r, Axis::Rows)?; // r x C
        let k1 = adaptive_avg_pool(ctx, &k, r, Axis::Cols)?; // N_kv x r
        let k2 = adaptive_avg_pool(ctx, &k, r, Axis::Rows)?; // r x C
        let qk2 = matmul(ctx, &q1, &k2)?; // N_q x C
                                          // The declared output shape of the second interaction forces the
                                          // operand order K'_1 * Q'_2 (N_kv x C).
        let qk1 = matmul(ctx, &k1, &q2)?;
        let weights = matmul(ctx, &qk1, &transpose2(&qk2)?)?; // N_kv x N_q
        let mixed = matmul(ctx, &transpose2(&weights)?, &v)?; // N_q x C
        outs.push(project(ctx, &mixed, w_out, w.b_out.as_ref())?);
    }
    stack_batches(outs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_t3(rng: &mut impl Rng, b: usize, n: usize, c: usize) -> Tensor {
        let data = (0..b * n * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::new(&[b, n, c], data).unwrap()
    }

    // Naive reference path used by the oracle tests: plain nested loops on
    // Vec<Vec<f64>>, no shared code with the implementation above.
    fn to_rows(t: &Tensor) -> Vec<Vec<f64>> {
        let (m, n) = (t.shape()[t.rank() - 2], t.shape()[t.rank() - 1]);
        (0..m)
            .map(|i| t.data()[i * n..(i + 1) * n].to_vec())
            .collect()
    }

    fn naive_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (m, k, n) = (a.len(), b.len(), b[0].len());
        let mut out = vec![vec![0.0; n]; m];
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for kk in 0..k {
                    acc += a[i][kk] * b[kk][j];
                }
                out[i][j] = acc;
            }
        }
        out
    }

    fn naive_attention(xq: &[Vec<f64>], xkv: &[Vec<f64>], w: &KernelWeights) -> Vec<Vec<f64>> {
        let wq = to_rows(w.w_q.as_ref().unwrap());
        let wk = to_rows(w.w_k.as_ref().unwrap());
        let wv = to_rows(w.w_v.as_ref().unwrap());
        let wo = to_rows(&w.out_map);
        let c = wq.len();
        let q = naive_matmul(xq, &wq);
        let k = naive_matmul(xkv, &wk);
        let v = naive_matmul(xkv, &wv);
        let scale = 1.0 / (c as f64).sqrt();
        let mut out = vec![vec![0.0; c]; q.len()];
        for i in 0..q.len() {
            let logits: Vec<f64> = k
                .iter()
                .map(|krow| q[i].iter().zip(krow).map(|(a, b)| a * b).sum::<f64>() * scale)
                .collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
            let denom: f64 = exps.iter().sum();
            for (j, vrow) in v.iter().enumerate() {
                let a = exps[j] / denom;
                for (o, &vv) in out[i].iter_mut().zip(vrow) {
                    *o += a * vv;
                }
            }
        }
        naive_matmul(&out, &wo)
    }

    fn assert_close(t: &Tensor, rows: &[Vec<f64>], tol: f64) {
        let n = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let got = t.data()[i * n + j];
                assert!((got - v).abs() < tol, "mismatch at ({i},{j}): {got} vs {v}");
            }
        }
    }

    #[test]
    fn self_attention_single_token_is_projected_value() {
        let mut r = rng(1);
        let w = KernelWeights::attention(6, false, &mut r);
        let x = random_t3(&mut r, 1, 1, 6);
        let mut ctx = CountingContext::new();
        let y = self_attention(&mut ctx, &x, &w).unwrap();
        let mut ctx2 = CountingContext::disabled();
        let v = matmul(&mut ctx2, &x.batch(0).unwrap(), w.w_v.as_ref().unwrap()).unwrap();
        let expect = matmul(&mut ctx2, &v, &w.out_map).unwrap();
        assert!(y.batch(0).unwrap().max_abs_diff(&expect).unwrap() < 1e-12);
    }

    #[test]
    fn self_attention_matches_naive_oracle() {
        let mut r = rng(2);
        let w = KernelWeights::attention(8, true, &mut r);
        let x = random_t3(&mut r, 2, 4, 8);
        let mut ctx = CountingContext::new();
        let y = self_attention(&mut ctx, &x, &w).unwrap();
        for b in 0..2 {
            // Fold biases into the naive path by hand.
            let xb = to_rows(&x.batch(b).unwrap());
            let wb = KernelWeights {
                b_q: None,
                b_k: None,
                b_v: None,
                b_out: None,
                ..w.clone()
            };
            // With biases enabled the closed-form naive path needs them;
            // re-run the oracle on a bias-free bundle against a bias-free
            // implementation instead.
            let mut ctx2 = CountingContext::new();
            let y2 = self_attention(&mut ctx2, &x, &wb).unwrap();
            let oracle = naive_attention(&xb, &xb, &wb);
            assert_close(&y2.batch(b).unwrap(), &oracle, 1e-10);
        }
        let _ = y;
    }

    #[test]
    fn self_attention_mac_count_matches_formula() {
        let mut r = rng(3);
        let (n, c) = (4, 8);
        let w = KernelWeights::attention(c, false, &mut r);
        let x = random_t3(&mut r, 1, n, c);
        let mut ctx = CountingContext::new();
        self_attention(&mut ctx, &x, &w).unwrap();
        assert_eq!(ctx.macs(), cost::macs_self_attention(n, c).unwrap());
        assert_eq!(ctx.macs(), (4 * n * c * c + 2 * n * n * c) as u64);
    }

    #[test]
    fn cross_attention_single_key_broadcasts_value() {
        let mut r = rng(4);
        let c = 5;
        let w = KernelWeights::attention(c, false, &mut r);
        let xq = random_t3(&mut r, 1, 4, c);
        let xkv = random_t3(&mut r, 1, 1, c);
        let mut ctx = CountingContext::new();
        let y = cross_attention(&mut ctx, &xq, &xkv, &w).unwrap();
        let mut free = CountingContext::disabled();
        let v = matmul(&mut free, &xkv.batch(0).unwrap(), w.w_v.as_ref().unwrap()).unwrap();
        let expect = matmul(&mut free, &v, &w.out_map).unwrap();
        for i in 0..4 {
            for j in 0..c {
                assert!((y.at3(0, i, j) - expect.at2(0, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cross_attention_degenerates_to_self_attention() {
        let mut r = rng(5);
        let w = KernelWeights::attention(8, false, &mut r);
        let x = random_t3(&mut r, 1, 5, 8);
        let mut c1 = CountingContext::new();
        let mut c2 = CountingContext::new();
        let a = self_attention(&mut c1, &x, &w).unwrap();
        let b = cross_attention(&mut c2, &x, &x, &w).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
        assert_eq!(c1.macs(), c2.macs());
    }

    #[test]
    fn cross_attention_matches_naive_oracle() {
        let mut r = rng(6);
        let w = KernelWeights::attention(8, false, &mut r);
        let xq = random_t3(&mut r, 1, 5, 8);
        let xkv = random_t3(&mut r, 1, 3, 8);
        let mut ctx = CountingContext::new();
        let y = cross_attention(&mut ctx, &xq, &xkv, &w).unwrap();
        let oracle = naive_attention(
            &to_rows(&xq.batch(0).unwrap()),
            &to_rows(&xkv.batch(0).unwrap()),
            &w,
        );
        assert_close(&y.batch(0).unwrap(), &oracle, 1e-10);
        assert_eq!(ctx.macs(), cost::macs_cross_attention(5, 3, 8).unwrap());
    }

    #[test]
    fn lsp_identity_pooling_is_self_bilinear() {
        let mut r = rng(7);
        let n = 6; // r == N == C makes both pools the identity
        let w = KernelWeights::lsp(n, false, false, &mut r);
        let x = random_t3(&mut r, 1, n, n);
        let mut ctx = CountingContext::new();
        let y = lsp(&mut ctx, &x, n, &w).unwrap();
        let rows = to_rows(&x.batch(0).unwrap());
        let oracle = naive_matmul(&naive_matmul(&rows, &rows), &to_rows(&w.out_map));
        assert_close(&y.batch(0).unwrap(), &oracle, 1e-10);
    }

    #[test]
    fn lsp_zero_input_zero_output() {
        let mut r = rng(8);
        let w = KernelWeights::lsp(4, false, false, &mut r);
        let x = Tensor::zeros(&[1, 3, 4]).unwrap();
        let mut ctx = CountingContext::new();
        let y = lsp(&mut ctx, &x, 2, &w).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lsp_macs_beat_self_attention_at_paper_scale() {
        let (n, c, r) = (431, 512, 64);
        assert!(cost::macs_lsp(n, c, r, false).unwrap() < cost::macs_self_attention(n, c).unwrap());
    }

    #[test]
    fn lsp_rejects_out_of_range_reduction() {
        let mut r = rng(9);
        let w = KernelWeights::lsp(4, false, false, &mut r);
        let x = Tensor::zeros(&[1, 3, 4]).unwrap();
        let mut ctx = CountingContext::new();
        assert!(matches!(lsp(&mut ctx, &x, 5, &w), Err(Error::Range(_))));
        assert!(matches!(lsp(&mut ctx, &x, 0, &w), Err(Error::Range(_))));
    }

    #[test]
    fn lcp_shape_contract_mesh_scale() {
        let mut r = rng(10);
        let c = 64;
        let w = KernelWeights::lcp(c, false, &mut r);
        let xq = random_t3(&mut r, 1, 431, c);
        let xkv = random_t3(&mut r, 1, 17, c);
        let mut ctx = CountingContext::new();
        let y = lcp(&mut ctx, &xq, &xkv, 8, &w).unwrap();
        assert_eq!(y.shape(), &[1, 431, 64]);
        assert_eq!(ctx.macs(), cost::macs_lcp(431, 17, c, 8).unwrap());
    }

    #[test]
    fn lcp_zero_kv_zero_output() {
        let mut r = rng(11);
        let w = KernelWeights::lcp(4, false, &mut r);
        let xq = random_t3(&mut r, 1, 3, 4);
        let xkv = Tensor::zeros(&[1, 2, 4]).unwrap();
        let mut ctx = CountingContext::new();
        let y = lcp(&mut ctx, &xq, &xkv, 2, &w).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lcp_matches_hand_traced_oracle() {
        // Independent step-by-step evaluation of the pooled interaction on
        // a tiny config (B=1, N_q=3, N_kv=2, C=4, r=2).
        let mut r = rng(12);
        let c = 4;
        let rr = 2;
        let w = KernelWeights::lcp(c, false, &mut r);
        let xq = random_t3(&mut r, 1, 3, c);
        let xkv = random_t3(&mut r, 1, 2, c);
        let mut ctx = CountingContext::new();
        let y = lcp(&mut ctx, &xq, &xkv, rr, &w).unwrap();

        let pool_cols = |m: &[Vec<f64>], t: usize| -> Vec<Vec<f64>> {
            let n = m[0].len();
            m.iter()
                .map(|row| {
                    (0..t)
                        .map(|i| {
                            let (lo, hi) = (i * n / t, (i + 1) * n / t);
                            row[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
                        })
                        .collect()
                })
                .collect()
        };
        let pool_rows = |m: &[Vec<f64>], t: usize| -> Vec<Vec<f64>> {
            let n = m.len();
            (0..t)
                .map(|i| {
                    let (lo, hi) = (i * n / t, (i + 1) * n / t);
                    let cnt = (hi - lo) as f64;
                    (0..m[0].len())
                        .map(|j| m[lo..hi].iter().map(|row| row[j]).sum::<f64>() / cnt)
                        .collect()
                })
                .collect()
        };
        let transpose = |m: &[Vec<f64>]| -> Vec<Vec<f64>> {
            (0..m[0].len())
                .map(|j| m.iter().map(|row| row[j]).collect())
                .collect()
        };

        let q = naive_matmul(
            &to_rows(&xq.batch(0).unwrap()),
            &to_rows(w.w_q.as_ref().unwrap()),
        );
        let k = naive_matmul(
            &to_rows(&xkv.batch(0).unwrap()),
            &to_rows(w.w_k.as_ref().unwrap()),
        );
        let v = naive_matmul(
            &to_rows(&xkv.batch(0).unwrap()),
            &to_rows(w.w_v.as_ref().unwrap()),
        );
        let q1 = pool_cols(&q, rr);
        let q2 = pool_rows(&q, rr);
        let k1 = pool_cols(&k, rr);
        let k2 = pool_rows(&k, rr);
        let qk2 = naive_matmul(&q1, &k2);
        let qk1 = naive_matmul(&k1, &q2);
        let weights = naive_matmul(&qk1, &transpose(&qk2));
        let mixed = naive_matmul(&transpose(&weights), &v);
        let oracle = naive_matmul(&mixed, &to_rows(&w.out_map));
        assert_close(&y.batch(0).unwrap(), &oracle, 1e-10);
    }

    #[test]
    fn lcp_range_and_channel_checks() {
        let mut r = rng(13);
        let w = KernelWeights::lcp(4, false, &mut r);
        let xq = Tensor::zeros(&[1, 3, 4]).unwrap();
        let xkv = Tensor::zeros(&[1, 2, 4]).unwrap();
        let mut ctx = CountingContext::new();
        assert!(matches!(
            lcp(&mut ctx, &xq, &xkv, 3, &w),
            Err(Error::Range(_))
        ));
        let bad_kv = Tensor::zeros(&[1, 2, 6]).unwrap();
        assert!(matches!(
            lcp(&mut ctx, &xq, &bad_kv, 2, &w),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn kernel_kind_parses_known_names_only() {
        assert_eq!(KernelKind::parse("lsp").unwrap(), KernelKind::Lsp);
        assert_eq!(
            KernelKind::parse("cross-attention").unwrap(),
            KernelKind::CrossAttention
        );
        assert!(matches!(
            KernelKind::parse("bogus"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn scalar_counts_per_kind() {
        let mut r = rng(14);
        let c = 7;
        assert_eq!(
            KernelWeights::attention(c, false, &mut r).scalar_count(),
            (4 * c * c) as u64
        );
        assert_eq!(
            KernelWeights::attention(c, true, &mut r).scalar_count(),
            (4 * c * c + 4 * c) as u64
        );
        assert_eq!(
            KernelWeights::lsp(c, false, false, &mut r).scalar_count(),
            (c * c) as u64
        );
        assert_eq!(
            KernelWeights::lsp(c, true, true, &mut r).scalar_count(),
            (2 * c * c + c) as u64
        );
    }
}
