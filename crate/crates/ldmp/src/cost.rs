//! Closed-form MAC and parameter counts for every kernel and for full
//! branch blocks, plus block-level comparison reports.
//!
//! Each formula matches the instrumented count of the corresponding
//! operation exactly under the crate's billing convention (see [`crate::tensor`]):
//! one MAC per scalar multiply in matrix products and convolutions, one MAC
//! per input element for adaptive pooling, nothing for softmax, layer
//! normalization, elementwise gate products or bias additions. The fixed
//! Haar analysis/synthesis filters are not billed either; they are not
//! learned operations.

use serde::{Deserialize, Serialize};

use crate::attention::KernelKind;
use crate::engine::LdmpConfig;
use crate::error::{Error, Result};

fn check_positive(values: &[(usize, &str)]) -> Result<()> {
    for &(v, name) in values {
        if v == 0 {
            return Err(Error::Range(format!("{name} must be >= 1")));
        }
    }
    Ok(())
}

fn check_r(r: usize, limits: &[(usize, &str)]) -> Result<()> {
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

/// `4NC^2 + 2N^2C` per batch slice.
pub fn macs_self_attention(n: usize, c: usize) -> Result<u64> {
    check_positive(&[(n, "N"), (c, "C")])?;
    let (n, c) = (n as u64, c as u64);
    Ok(4 * n * c * c + 2 * n * n * c)
}

/// `2 N_q C^2 + 2 N_kv C^2 + 2 N_q N_kv C` per batch slice.
pub fn macs_cross_attention(n_q: usize, n_kv: usize, c: usize) -> Result<u64> {
    check_positive(&[(n_q, "N_q"), (n_kv, "N_kv"), (c, "C")])?;
    let (n_q, n_kv, c) = (n_q as u64, n_kv as u64, c as u64);
    Ok(2 * n_q * c * c + 2 * n_kv * c * c + 2 * n_q * n_kv * c)
}

/// `2NC + NCr + NC^2` per batch slice, plus `NC^2` when the optional input
/// map is enabled.
pub fn macs_lsp(n: usize, c: usize, r: usize, input_map: bool) -> Result<u64> {
    check_positive(&[(n, "N"), (c, "C")])?;
    check_r(r, &[(n, "N"), (c, "C")])?;
    let (n, c, r) = (n as u64, c as u64, r as u64);
    let base = 2 * n * c + n * c * r + n * c * c;
    Ok(if input_map { base + n * c * c } else { base })
}

/// `2 N_q C^2 + 2 N_kv C^2 + 2 (N_q + N_kv) C + (N_q + N_kv) C r
///  + 2 N_q N_kv C` per batch slice.
pub fn macs_lcp(n_q: usize, n_kv: usize, c: usize, r: usize) -> Result<u64> {
    check_positive(&[(n_q, "N_q"), (n_kv, "N_kv"), (c, "C")])?;
    check_r(r, &[(n_q, "N_q"), (n_kv, "N_kv"), (c, "C")])?;
    let (n_q, n_kv, c, r) = (n_q as u64, n_kv as u64, c as u64, r as u64);
    Ok(2 * n_q * c * c
        + 2 * n_kv * c * c
        + 2 * (n_q + n_kv) * c
        + (n_q + n_kv) * c * r
        + 2 * n_q * n_kv * c)
}

/// The two conditioning maps of one AdaLN call.
pub fn macs_adaln(c: usize, c_hidden: usize) -> u64 {
    2 * (c_hidden as u64) * (c as u64)
}

/// Two pointwise maps with hidden width `2C`.
pub fn macs_mlp(n: usize, c: usize) -> u64 {
    4 * (n as u64) * (c as u64) * (c as u64)
}

/// Affine map over `n` rows.
pub fn macs_affine(n: usize, d_in: usize, d_out: usize) -> u64 {
    (n as u64) * (d_in as u64) * (d_out as u64)
}

/// Per-row depthwise convolution.
pub fn macs_conv_rows(rows: usize, cols: usize, kernel_len: usize) -> u64 {
    (rows as u64) * (cols as u64) * (kernel_len as u64)
}

/// Single-layer GRU over `t` steps: three input maps and three recurrent
/// maps per step.
pub fn macs_gru(t: usize, c_in: usize, hidden: usize) -> u64 {
    let (t, c_in, h) = (t as u64, c_in as u64, hidden as u64);
    t * 3 * (c_in * h + h * h)
}

/// Temporal attention over the low half: QKV maps plus two score/value
/// products (no output map in the stage-1 extractor).
pub fn macs_lifd_attention(t: usize, half: usize) -> u64 {
    let (t, half) = (t as u64, half as u64);
    3 * t * half * half + 2 * t * t * half
}

/// Sparse row-matrix application.
pub fn macs_sparse_apply(nnz: usize, d: usize) -> u64 {
    (nnz as u64) * (d as u64)
}

/// Full stage-1 extractor: low-branch attention, high-branch convolution
/// and the GRU encoder (the fixed wavelet filters are unbilled).
pub fn macs_run_lifd(cfg: &LdmpConfig) -> Result<u64> {
    cfg.validate()?;
    let half = cfg.c_img / 2;
    Ok(macs_lifd_attention(cfg.t, half)
        + macs_conv_rows(cfg.t, half, cfg.conv_kernel_len)
        + macs_gru(cfg.t, cfg.c_img, cfg.c_hidden))
}

/// One mesh-branch block: AdaLN, LCP against pose tokens, AdaLN, LSP, MLP.
/// The reduced extent is clamped per call site, mirroring the engine:
/// pooling can only shrink an axis.
pub fn macs_mesh_block(cfg: &LdmpConfig) -> Result<u64> {
    let r_interact = cfg.effective_r(&[cfg.n_vertices, cfg.j, cfg.c_embed]);
    let r_self = cfg.effective_r(&[cfg.n_vertices, cfg.c_embed]);
    Ok(2 * macs_adaln(cfg.c_embed, cfg.c_hidden)
        + macs_lcp(cfg.n_vertices, cfg.j, cfg.c_embed, r_interact)?
        + macs_lsp(cfg.n_vertices, cfg.c_embed, r_self, false)?
        + macs_mlp(cfg.n_vertices, cfg.c_embed))
}

/// One pose-branch block (roles swapped).
pub fn macs_pose_block(cfg: &LdmpConfig) -> Result<u64> {
    let r_interact = cfg.effective_r(&[cfg.j, cfg.n_vertices, cfg.c_embed]);
    let r_self = cfg.effective_r(&[cfg.j, cfg.c_embed]);
    Ok(2 * macs_adaln(cfg.c_embed, cfg.c_hidden)
        + macs_lcp(cfg.j, cfg.n_vertices, cfg.c_embed, r_interact)?
        + macs_lsp(cfg.j, cfg.c_embed, r_self, false)?
        + macs_mlp(cfg.j, cfg.c_embed))
}

/// Baseline mesh-branch block with dense attention in place of LCP/LSP.
pub fn macs_baseline_mesh_block(cfg: &LdmpConfig) -> Result<u64> {
    Ok(2 * macs_adaln(cfg.c_embed, cfg.c_hidden)
        + macs_cross_attention(cfg.n_vertices, cfg.j, cfg.c_embed)?
        + macs_self_attention(cfg.n_vertices, cfg.c_embed)?
        + macs_mlp(cfg.n_vertices, cfg.c_embed))
}

/// Baseline pose-branch block with dense attention in place of LCP/LSP.
pub fn macs_baseline_pose_block(cfg: &LdmpConfig) -> Result<u64> {
    Ok(2 * macs_adaln(cfg.c_embed, cfg.c_hidden)
        + macs_cross_attention(cfg.j, cfg.n_vertices, cfg.c_embed)?
        + macs_self_attention(cfg.j, cfg.c_embed)?
        + macs_mlp(cfg.j, cfg.c_embed))
}

/// Full dual-branch stage-2 forward pass: embeddings, all blocks of both
/// branches and the coordinate heads.
pub fn macs_run_ldmp(cfg: &LdmpConfig) -> Result<u64> {
    cfg.validate()?;
    let blocks = (cfg.n_blocks as u64) * (macs_mesh_block(cfg)? + macs_pose_block(cfg)?);
    Ok(macs_affine(cfg.n_vertices, 3, cfg.c_embed)
        + macs_affine(cfg.j, 3, cfg.c_embed)
        + blocks
        + macs_affine(cfg.n_vertices, cfg.c_embed, 3)
        + macs_affine(cfg.j, cfg.c_embed, 3))
}

/// Upsampling path: embed, AdaLN, MLP, residual head, sparse lift.
pub fn macs_upsample(cfg: &LdmpConfig, nnz: usize) -> Result<u64> {
    cfg.validate()?;
    Ok(macs_affine(cfg.n_vertices, 3, cfg.c_embed)
        + macs_adaln(cfg.c_embed, cfg.c_hidden)
        + macs_mlp(cfg.n_vertices, cfg.c_embed)
        + macs_affine(cfg.n_vertices, cfg.c_embed, 3)
        + macs_sparse_apply(nnz, 3))
}

/// Scalar count of one kernel's weight bundle.
pub fn params_kernel(kind: KernelKind, c: usize, biases: bool, input_map: bool) -> Result<u64> {
    check_positive(&[(c, "C")])?;
    if input_map && kind != KernelKind::Lsp {
        return Err(Error::Config(
            "the optional input map exists only for the LSP kernel".into(),
        ));
    }
    let c = c as u64;
    Ok(match kind {
        KernelKind::SelfAttention | KernelKind::CrossAttention | KernelKind::Lcp => {
            4 * c * c + if biases { 4 * c } else { 0 }
        }
        KernelKind::Lsp => c * c + if biases { c } else { 0 } + if input_map { c * c } else { 0 },
    })
}

pub fn params_affine(d_in: usize, d_out: usize) -> u64 {
    (d_in as u64) * (d_out as u64) + d_out as u64
}

pub fn params_adaln(c_hidden: usize, c: usize) -> u64 {
    2 * ((c_hidden as u64) * (c as u64) + c as u64)
}

pub fn params_mlp(c: usize) -> u64 {
    let c = c as u64;
    4 * c * c + 3 * c
}

/// One branch block of the reduced design (biasless LCP + LSP kernels).
pub fn params_block(cfg: &LdmpConfig) -> Result<u64> {
    Ok(2 * params_adaln(cfg.c_hidden, cfg.c_embed)
        + params_kernel(KernelKind::Lcp, cfg.c_embed, false, false)?
        + params_kernel(KernelKind::Lsp, cfg.c_embed, false, false)?
        + params_mlp(cfg.c_embed))
}

/// One branch block of the dense-attention baseline.
pub fn params_baseline_block(cfg: &LdmpConfig) -> Result<u64> {
    Ok(2 * params_adaln(cfg.c_hidden, cfg.c_embed)
        + params_kernel(KernelKind::CrossAttention, cfg.c_embed, false, false)?
        + params_kernel(KernelKind::SelfAttention, cfg.c_embed, false, false)?
        + params_mlp(cfg.c_embed))
}

/// All stage-2 weights (both branches, embeddings, heads, upsampling path).
pub fn params_run_ldmp(cfg: &LdmpConfig) -> Result<u64> {
    cfg.validate()?;
    Ok(2 * params_affine(3, cfg.c_embed)
        + 2 * (cfg.n_blocks as u64) * params_block(cfg)?
        + 2 * params_affine(cfg.c_embed, 3)
        + params_upsample(cfg))
}

pub fn params_upsample(cfg: &LdmpConfig) -> u64 {
    params_affine(3, cfg.c_embed)
        + params_adaln(cfg.c_hidden, cfg.c_embed)
        + params_mlp(cfg.c_embed)
        + params_affine(cfg.c_embed, 3)
}

/// One named tally.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostEntry {
    pub name: String,
    pub macs: u64,
    pub params: u64,
}

/// Percentage drop of a variant against its baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostComparison {
    pub baseline: String,
    pub variant: String,
    pub mac_reduction_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct CostReport {
    pub entries: Vec<CostEntry>,
    pub comparisons: Vec<CostComparison>,
}

pub fn reduction_pct(baseline_macs: u64, variant_macs: u64) -> f64 {
    100.0 * (1.0 - variant_macs as f64 / baseline_macs as f64)
}

impl CostReport {
    pub fn entry(&self, name: &str) -> Option<&CostEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn comparison(&self, variant: &str) -> Option<&CostComparison> {
        self.comparisons.iter().find(|c| c.variant == variant)
    }
}

/// Tally one block stack of the reduced design against a dense-attention
/// baseline over identical token counts and width, per branch and for the
/// whole stack.
pub fn block_comparison(cfg: &LdmpConfig) -> Result<CostReport> {
    cfg.validate()?;
    let n_blocks = cfg.n_blocks as u64;
    let mesh_base = macs_baseline_mesh_block(cfg)?;
    let mesh_ldmp = macs_mesh_block(cfg)?;
    let pose_base = macs_baseline_pose_block(cfg)?;
    let pose_ldmp = macs_pose_block(cfg)?;
    let stack_base = n_blocks * (mesh_base + pose_base);
    let stack_ldmp = n_blocks * (mesh_ldmp + pose_ldmp);
    let p_base = params_baseline_block(cfg)?;
    let p_ldmp = params_block(cfg)?;

    let entries = vec![
        CostEntry {
            name: "mesh-block-attention".into(),
            macs: mesh_base,
            params: p_base,
        },
        CostEntry {
            name: "mesh-block-ldmp".into(),
            macs: mesh_ldmp,
            params: p_ldmp,
        },
        CostEntry {
            name: "pose-block-attention".into(),
            macs: pose_base,
            params: p_base,
        },
        CostEntry {
            name: "pose-block-ldmp".into(),
            macs: pose_ldmp,
            params: p_ldmp,
        },
        CostEntry {
            name: "stack-attention".into(),
            macs: stack_base,
            params: 2 * n_blocks * p_base,
        },
        CostEntry {
            name: "stack-ldmp".into(),
            macs: stack_ldmp,
            params: 2 * n_blocks * p_ldmp,
        },
    ];
    let comparisons = vec![
        CostComparison {
            baseline: "mesh-block-attention".into(),
            variant: "mesh-block-ldmp".into(),
            mac_reduction_pct: reduction_pct(mesh_base, mesh_ldmp),
        },
        CostComparison {
            baseline: "pose-block-attention".into(),
            variant: "pose-block-ldmp".into(),
            mac_reduction_pct: reduction_pct(pose_base, pose_ldmp),
        },
        CostComparison {
            baseline: "stack-attention".into(),
            variant: "stack-ldmp".into(),
            mac_reduction_pct: reduction_pct(stack_base, stack_ldmp),
        },
    ];
    Ok(CostReport {
        entries,
        comparisons,
    })
}
