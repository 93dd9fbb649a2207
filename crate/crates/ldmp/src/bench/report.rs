//! The efficiency table behind `ldmp-bench cost`: measured MAC/parameter
//! rows for every kernel and for full branch-block stacks, reference rows
//! from the published comparison, and an r sweep.
//!
//! "joint-" rows use the pose token count, "vertex-" rows the mesh vertex
//! count. Measured rows are instrumented executions; every instrumented
//! count is re-asserted against the analytical formula during emission.

use serde::Serialize;

use crate::attention::{self, KernelKind, KernelWeights};
use crate::cost;
use crate::engine::{self, LdmpConfig};
use crate::error::{Error, Result};
use crate::synthetic;
use crate::tensor::{CountingContext, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Source {
    #[serde(rename = "measured")]
    Measured,
    #[serde(rename = "paper-reference")]
    PaperReference,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostRow {
    pub name: String,
    pub macs: u64,
    pub params: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduction_pct: Option<f64>,
    pub source: Source,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub r: usize,
    pub lsp_macs: u64,
    pub lcp_macs: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostTable {
    pub rows: Vec<CostRow>,
    pub r_sweep: Vec<SweepRow>,
}

/// Published comparison rows (MACs, params, optional baseline and
/// reduction).
const PAPER_REFERENCE: &[(&str, u64, u64, Option<(&str, f64)>)] = &[
    ("joint-SelfAttention", 46_660_000, 574_270, None),
    (
        "joint-LSP",
        37_110_000,
        558_270,
        Some(("joint-SelfAttention", 21.0)),
    ),
    ("joint-CrossAttention", 171_440_000, 1_125_370, None),
    (
        "joint-LCP",
        54_810_000,
        1_108_990,
        Some(("joint-CrossAttention", 69.0)),
    ),
    ("vertex-SelfAttention", 711_420_000, 574_270, None),
    (
        "vertex-LSP",
        477_610_000,
        558_270,
        Some(("vertex-SelfAttention", 33.0)),
    ),
    ("vertex-CrossAttention", 617_980_000, 1_125_370, None),
    (
        "vertex-LCP",
        494_420_000,
        1_108_990,
        Some(("vertex-CrossAttention", 20.0)),
    ),
    ("Coevoblock", 4_740_000_000, 10_060_000, None),
    ("LDMP", 3_360_000_000, 9_870_000, Some(("Coevoblock", 30.0))),
];

fn assert_parity(name: &str, instrumented: u64, analytical: u64) -> Result<u64> {
    if instrumented != analytical {
        return Err(Error::CheckFailed(format!(
            "{name}: instrumented MACs {instrumented} != analytical {analytical}"
        )));
    }
    Ok(instrumented)
}

fn random_tokens(cfg: &LdmpConfig, n: usize, stream: u64) -> Result<Tensor> {
    synthetic::features(n, cfg.c_embed, cfg.seed ^ stream).reshape(&[1, n, cfg.c_embed])
}

/// Build the table at the manifest's dimensions.
pub fn build_cost_table(cfg: &LdmpConfig) -> Result<CostTable> {
    cfg.validate()?;
    let c = cfg.c_embed;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    use rand::SeedableRng;
    let attn_w = KernelWeights::attention(c, false, &mut rng);
    let lsp_w = KernelWeights::lsp(c, false, false, &mut rng);

    let joints = random_tokens(cfg, cfg.j, 11)?;
    let vertices = random_tokens(cfg, cfg.n_vertices, 12)?;

    let r_j = cfg.effective_r(&[cfg.j, c]);
    let r_v = cfg.effective_r(&[cfg.n_vertices, c]);
    let r_jv = cfg.effective_r(&[cfg.j, cfg.n_vertices, c]);

    struct Measured {
        name: &'static str,
        macs: u64,
        params: u64,
        baseline: Option<&'static str>,
    }
    let mut measured = Vec::new();

    let mut run = |name: &'static str,
                   baseline: Option<&'static str>,
                   kind: KernelKind,
                   macs: Result<(u64, u64)>|
     -> Result<()> {
        let (instrumented, analytical) = macs?;
        let macs = assert_parity(name, instrumented, analytical)?;
        let params = cost::params_kernel(kind, c, false, false)?;
        measured.push(Measured {
            name,
            macs,
            params,
            baseline,
        });
        Ok(())
    };

    run("joint-SelfAttention", None, KernelKind::SelfAttention, {
        let mut ctx = CountingContext::new();
        attention::self_attention(&mut ctx, &joints, &attn_w)?;
        Ok((ctx.macs(), cost::macs_self_attention(cfg.j, c)?))
    })?;
    run("joint-LSP", Some("joint-SelfAttention"), KernelKind::Lsp, {
        let mut ctx = CountingContext::new();
        attention::lsp(&mut ctx, &joints, r_j, &lsp_w)?;
        Ok((ctx.macs(), cost::macs_lsp(cfg.j, c, r_j, false)?))
    })?;
    run("joint-CrossAttention", None, KernelKind::CrossAttention, {
        let mut ctx = CountingContext::new();
        attention::cross_attention(&mut ctx, &joints, &vertices, &attn_w)?;
        Ok((
            ctx.macs(),
            cost::macs_cross_attention(cfg.j, cfg.n_vertices, c)?,
        ))
    })?;
    run(
        "joint-LCP",
        Some("joint-CrossAttention"),
        KernelKind::Lcp,
        {
            let mut ctx = CountingContext::new();
            attention::lcp(&mut ctx, &joints, &vertices, r_jv, &attn_w)?;
            Ok((ctx.macs(), cost::macs_lcp(cfg.j, cfg.n_vertices, c, r_jv)?))
        },
    )?;
    run("vertex-SelfAttention", None, KernelKind::SelfAttention, {
        let mut ctx = CountingContext::new();
        attention::self_attention(&mut ctx, &vertices, &attn_w)?;
        Ok((ctx.macs(), cost::macs_self_attention(cfg.n_vertices, c)?))
    })?;
    run(
        "vertex-LSP",
        Some("vertex-SelfAttention"),
        KernelKind::Lsp,
        {
            let mut ctx = CountingContext::new();
            attention::lsp(&mut ctx, &vertices, r_v, &lsp_w)?;
            Ok((ctx.macs(), cost::macs_lsp(cfg.n_vertices, c, r_v, false)?))
        },
    )?;
    run("vertex-CrossAttention", None, KernelKind::CrossAttention, {
        let mut ctx = CountingContext::new();
        attention::cross_attention(&mut ctx, &vertices, &joints, &attn_w)?;
        Ok((
            ctx.macs(),
            cost::macs_cross_attention(cfg.n_vertices, cfg.j, c)?,
        ))
    })?;
    run(
        "vertex-LCP",
        Some("vertex-CrossAttention"),
        KernelKind::Lcp,
        {
            let mut ctx = CountingContext::new();
            attention::lcp(&mut ctx, &vertices, &joints, r_jv, &attn_w)?;
            Ok((ctx.macs(), cost::macs_lcp(cfg.n_vertices, cfg.j, c, r_jv)?))
        },
    )?;

    // Full block stacks: instrumented branch passes against the block
    // formulas.
    let weights = engine::LdmpWeights::seeded(cfg, &mut rng);
    let tf = synthetic::features(1, cfg.c_hidden, cfg.seed ^ 13).reshape(&[cfg.c_hidden])?;
    let mesh_f = synthetic::features(cfg.n_vertices, c, cfg.seed ^ 14);
    let pose_f = synthetic::features(cfg.j, c, cfg.seed ^ 15);
    let mut ctx = CountingContext::new();
    engine::mesh_branch(&mut ctx, &tf, &mesh_f, &pose_f, cfg, &weights.mesh_blocks)?;
    let mesh_stack = assert_parity(
        "ldmp mesh branch",
        ctx.macs(),
        cfg.n_blocks as u64 * cost::macs_mesh_block(cfg)?,
    )?;
    let mut ctx = CountingContext::new();
    engine::pose_branch(&mut ctx, &tf, &pose_f, &mesh_f, cfg, &weights.pose_blocks)?;
    let pose_stack = assert_parity(
        "ldmp pose branch",
        ctx.macs(),
        cfg.n_blocks as u64 * cost::macs_pose_block(cfg)?,
    )?;
    let ldmp_stack = mesh_stack + pose_stack;
    let baseline_stack = cfg.n_blocks as u64
        * (cost::macs_baseline_mesh_block(cfg)? + cost::macs_baseline_pose_block(cfg)?);
    measured.push(Measured {
        name: "block-baseline-attention",
        macs: baseline_stack,
        params: 2 * cfg.n_blocks as u64 * cost::params_baseline_block(cfg)?,
        baseline: None,
    });
    measured.push(Measured {
        name: "block-ldmp",
        macs: ldmp_stack,
        params: 2 * cfg.n_blocks as u64 * cost::params_block(cfg)?,
        baseline: Some("block-baseline-attention"),
    });

    let mut rows = Vec::new();
    let find = |measured: &[Measured], name: &str| -> u64 {
        measured
            .iter()
            .find(|m| m.name == name)
            .map(|m| m.macs)
            .expect("baseline row exists")
    };
    for m in &measured {
        let reduction = m
            .baseline
            .map(|b| cost::reduction_pct(find(&measured, b), m.macs));
        rows.push(CostRow {
            name: m.name.to_string(),
            macs: m.macs,
            params: m.params,
            baseline: m.baseline.map(str::to_string),
            reduction_pct: reduction,
            source: Source::Measured,
        });
    }
    for &(name, macs, params, cmp) in PAPER_REFERENCE {
        rows.push(CostRow {
            name: name.to_string(),
            macs,
            params,
            baseline: cmp.map(|(b, _)| b.to_string()),
            reduction_pct: cmp.map(|(_, pct)| pct),
            source: Source::PaperReference,
        });
    }

    // MAC sweep over the shared reduced extent (clamped per kernel).
    let mut r_sweep = Vec::new();
    let mut r = 1usize;
    let r_cap = cfg.n_vertices.min(c);
    loop {
        r_sweep.push(SweepRow {
            r,
            lsp_macs: cost::macs_lsp(cfg.n_vertices, c, r.min(r_cap), false)?,
            lcp_macs: cost::macs_lcp(cfg.n_vertices, cfg.j, c, r.min(cfg.j).min(r_cap))?,
        });
        if r >= r_cap {
            break;
        }
        r = (r * 2).min(r_cap);
    }

    Ok(CostTable { rows, r_sweep })
}

impl CostTable {
    /// Fixed column order: name,macs,params,baseline,reduction_pct,source.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,macs,params,baseline,reduction_pct,source\n");
        for row in &self.rows {
            let source = match row.source {
                Source::Measured => "measured",
                Source::PaperReference => "paper-reference",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.name,
                row.macs,
                row.params,
                row.baseline.as_deref().unwrap_or(""),
                row.reduction_pct
                    .map(|p| format!("{p:.4}"))
                    .unwrap_or_default(),
                source
            ));
        }
        out
    }

    pub fn row(&self, name: &str, source: Source) -> Option<&CostRow> {
        self.rows
            .iter()
            .find(|r| r.name == name && r.source == source)
    }
}
