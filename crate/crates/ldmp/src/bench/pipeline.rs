//! End-to-end forward runs: stage-1 extraction, stage-2 interaction,
//! upsampling, MAC tallies, metrics, and deterministic output files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bench::manifest::{ResolvedInputs, RunManifest};
use crate::cost;
use crate::engine::{
    self, AdalnWeights, AffineMap, BlockWeights, LdmpConfig, LdmpWeights, MlpWeights,
    UpsampleWeights,
};
use crate::error::{Error, Result};
use crate::io;
use crate::lifd::{self, GruWeights, LifdWeights};
use crate::metrics::{self, LossParts, LossWeights};
use crate::tensor::{CountingContext, Tensor};

/// All learnable state of the two-stage pipeline.
#[derive(Debug, Clone)]
pub struct PipelineWeights {
    pub lifd: LifdWeights,
    pub ldmp: LdmpWeights,
}

impl PipelineWeights {
    /// Deterministic initialization from `cfg.seed`.
    pub fn seeded(cfg: &LdmpConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self {
            lifd: LifdWeights::seeded(&mut rng, cfg.c_img, cfg.c_hidden, cfg.conv_kernel_len),
            ldmp: LdmpWeights::seeded(cfg, &mut rng),
        }
    }

    pub fn scalar_count(&self) -> u64 {
        self.lifd.scalar_count() + self.ldmp.scalar_count()
    }

    /// Flatten into named tensors for the weight-bundle format (fixed
    /// order: stage 1, then stage 2).
    pub fn to_entries(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        out.push(("lifd.w_q".to_string(), self.lifd.w_q.clone()));
        out.push(("lifd.w_k".to_string(), self.lifd.w_k.clone()));
        out.push(("lifd.w_v".to_string(), self.lifd.w_v.clone()));
        out.push((
            "lifd.conv_kernel".to_string(),
            self.lifd.conv_kernel.clone(),
        ));
        push_gru(&mut out, "lifd.gru", &self.lifd.gru);
        push_affine(&mut out, "ldmp.embed_mesh", &self.ldmp.embed_mesh);
        push_affine(&mut out, "ldmp.embed_pose", &self.ldmp.embed_pose);
        for (i, b) in self.ldmp.mesh_blocks.iter().enumerate() {
            push_block(&mut out, &format!("ldmp.mesh_blocks.{i}"), b);
        }
        for (i, b) in self.ldmp.pose_blocks.iter().enumerate() {
            push_block(&mut out, &format!("ldmp.pose_blocks.{i}"), b);
        }
        push_affine(&mut out, "ldmp.head_mesh", &self.ldmp.head_mesh);
        push_affine(&mut out, "ldmp.head_pose", &self.ldmp.head_pose);
        push_affine(&mut out, "ldmp.upsample.embed", &self.ldmp.upsample.embed);
        push_adaln(&mut out, "ldmp.upsample.adaln", &self.ldmp.upsample.adaln);
        push_mlp(&mut out, "ldmp.upsample.mlp", &self.ldmp.upsample.mlp);
        push_affine(&mut out, "ldmp.upsample.head", &self.ldmp.upsample.head);
        out
    }

    /// Rebuild from named tensors, checking every name and shape against
    /// the config.
    pub fn from_entries(entries: Vec<(String, Tensor)>, cfg: &LdmpConfig) -> Result<Self> {
        let mut bag = TensorBag::new(entries)?;
        let half = cfg.c_img / 2;
        let (c, ch) = (cfg.c_embed, cfg.c_hidden);
        let lifd = LifdWeights {
            w_q: bag.take("lifd.w_q", &[half, half])?,
            w_k: bag.take("lifd.w_k", &[half, half])?,
            w_v: bag.take("lifd.w_v", &[half, half])?,
            conv_kernel: bag.take("lifd.conv_kernel", &[cfg.conv_kernel_len])?,
            gru: take_gru(&mut bag, "lifd.gru", cfg.c_img, ch)?,
        };
        let mut mesh_blocks = Vec::with_capacity(cfg.n_blocks);
        let mut pose_blocks = Vec::with_capacity(cfg.n_blocks);
        for i in 0..cfg.n_blocks {
            mesh_blocks.push(take_block(
                &mut bag,
                &format!("ldmp.mesh_blocks.{i}"),
                ch,
                c,
            )?);
        }
        for i in 0..cfg.n_blocks {
            pose_blocks.push(take_block(
                &mut bag,
                &format!("ldmp.pose_blocks.{i}"),
                ch,
                c,
            )?);
        }
        let ldmp = LdmpWeights {
            embed_mesh: take_affine(&mut bag, "ldmp.embed_mesh", 3, c)?,
            embed_pose: take_affine(&mut bag, "ldmp.embed_pose", 3, c)?,
            mesh_blocks,
            pose_blocks,
            head_mesh: take_affine(&mut bag, "ldmp.head_mesh", c, 3)?,
            head_pose: take_affine(&mut bag, "ldmp.head_pose", c, 3)?,
            upsample: UpsampleWeights {
                embed: take_affine(&mut bag, "ldmp.upsample.embed", 3, c)?,
                adaln: take_adaln(&mut bag, "ldmp.upsample.adaln", ch, c)?,
                mlp: take_mlp(&mut bag, "ldmp.upsample.mlp", c)?,
                head: take_affine(&mut bag, "ldmp.upsample.head", c, 3)?,
            },
        };
        bag.finish()?;
        Ok(Self { lifd, ldmp })
    }
}

fn push_affine(out: &mut Vec<(String, Tensor)>, prefix: &str, a: &AffineMap) {
    out.push((format!("{prefix}.weight"), a.weight.clone()));
    out.push((format!("{prefix}.bias"), a.bias.clone()));
}

fn push_adaln(out: &mut Vec<(String, Tensor)>, prefix: &str, a: &AdalnWeights) {
    out.push((format!("{prefix}.w_gamma"), a.w_gamma.clone()));
    out.push((format!("{prefix}.b_gamma"), a.b_gamma.clone()));
    out.push((format!("{prefix}.w_beta"), a.w_beta.clone()));
    out.push((format!("{prefix}.b_beta"), a.b_beta.clone()));
}

fn push_mlp(out: &mut Vec<(String, Tensor)>, prefix: &str, m: &MlpWeights) {
    out.push((format!("{prefix}.w1"), m.w1.clone()));
    out.push((format!("{prefix}.b1"), m.b1.clone()));
    out.push((format!("{prefix}.w2"), m.w2.clone()));
    out.push((format!("{prefix}.b2"), m.b2.clone()));
}

fn push_gru(out: &mut Vec<(String, Tensor)>, prefix: &str, g: &GruWeights) {
    for (name, t) in [
        ("w_update", &g.w_update),
        ("w_reset", &g.w_reset),
        ("w_cand", &g.w_cand),
        ("u_update", &g.u_update),
        ("u_reset", &g.u_reset),
        ("u_cand", &g.u_cand),
        ("b_update", &g.b_update),
        ("b_reset", &g.b_reset),
        ("b_cand", &g.b_cand),
    ] {
        out.push((format!("{prefix}.{name}"), t.clone()));
    }
}

fn push_block(out: &mut Vec<(String, Tensor)>, prefix: &str, b: &BlockWeights) {
    push_adaln(out, &format!("{prefix}.adaln_interact"), &b.adaln_interact);
    for (name, t) in [
        ("w_q", b.interact.w_q.as_ref()),
        ("w_k", b.interact.w_k.as_ref()),
        ("w_v", b.interact.w_v.as_ref()),
    ] {
        if let Some(t) = t {
            out.push((format!("{prefix}.interact.{name}"), t.clone()));
        }
    }
    out.push((
        format!("{prefix}.interact.out_map"),
        b.interact.out_map.clone(),
    ));
    push_adaln(out, &format!("{prefix}.adaln_self"), &b.adaln_self);
    out.push((
        format!("{prefix}.self_perception.out_map"),
        b.self_perception.out_map.clone(),
    ));
    push_mlp(out, &format!("{prefix}.mlp"), &b.mlp);
}

struct TensorBag(BTreeMap<String, Tensor>);

impl TensorBag {
    fn new(entries: Vec<(String, Tensor)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (name, t) in entries {
            if map.insert(name.clone(), t).is_some() {
                return Err(Error::Validation(format!(
                    "weight bundle lists tensor '{name}' twice"
                )));
            }
        }
        Ok(Self(map))
    }

    fn take(&mut self, name: &str, shape: &[usize]) -> Result<Tensor> {
        let t = self.0.remove(name).ok_or_else(|| {
            Error::Validation(format!("weight bundle is missing tensor '{name}'"))
        })?;
        if t.shape() != shape {
            return Err(Error::Validation(format!(
                "weight tensor '{name}' has shape {:?}, expected {shape:?}",
                t.shape()
            )));
        }
        Ok(t)
    }

    fn finish(self) -> Result<()> {
        if let Some(name) = self.0.keys().next() {
            return Err(Error::Validation(format!(
                "weight bundle contains unexpected tensor '{name}'"
            )));
        }
        Ok(())
    }
}

fn take_affine(bag: &mut TensorBag, prefix: &str, d_in: usize, d_out: usize) -> Result<AffineMap> {
    Ok(AffineMap {
        weight: bag.take(&format!("{prefix}.weight"), &[d_in, d_out])?,
        bias: bag.take(&format!("{prefix}.bias"), &[d_out])?,
    })
}

fn take_adaln(bag: &mut TensorBag, prefix: &str, ch: usize, c: usize) -> Result<AdalnWeights> {
    Ok(AdalnWeights {
        w_gamma: bag.take(&format!("{prefix}.w_gamma"), &[ch, c])?,
        b_gamma: bag.take(&format!("{prefix}.b_gamma"), &[c])?,
        w_beta: bag.take(&format!("{prefix}.w_beta"), &[ch, c])?,
        b_beta: bag.take(&format!("{prefix}.b_beta"), &[c])?,
    })
}

fn take_mlp(bag: &mut TensorBag, prefix: &str, c: usize) -> Result<MlpWeights> {
    Ok(MlpWeights {
        w1: bag.take(&format!("{prefix}.w1"), &[c, 2 * c])?,
        b1: bag.take(&format!("{prefix}.b1"), &[2 * c])?,
        w2: bag.take(&format!("{prefix}.w2"), &[2 * c, c])?,
        b2: bag.take(&format!("{prefix}.b2"), &[c])?,
    })
}

fn take_gru(bag: &mut TensorBag, prefix: &str, c_in: usize, h: usize) -> Result<GruWeights> {
    Ok(GruWeights {
        w_update: bag.take(&format!("{prefix}.w_update"), &[c_in, h])?,
        w_reset: bag.take(&format!("{prefix}.w_reset"), &[c_in, h])?,
        w_cand: bag.take(&format!("{prefix}.w_cand"), &[c_in, h])?,
        u_update: bag.take(&format!("{prefix}.u_update"), &[h, h])?,
        u_reset: bag.take(&format!("{prefix}.u_reset"), &[h, h])?,
        u_cand: bag.take(&format!("{prefix}.u_cand"), &[h, h])?,
        b_update: bag.take(&format!("{prefix}.b_update"), &[h])?,
        b_reset: bag.take(&format!("{prefix}.b_reset"), &[h])?,
        b_cand: bag.take(&format!("{prefix}.b_cand"), &[h])?,
    })
}

fn take_block(bag: &mut TensorBag, prefix: &str, ch: usize, c: usize) -> Result<BlockWeights> {
    Ok(BlockWeights {
        adaln_interact: take_adaln(bag, &format!("{prefix}.adaln_interact"), ch, c)?,
        interact: crate::attention::KernelWeights {
            w_q: Some(bag.take(&format!("{prefix}.interact.w_q"), &[c, c])?),
            w_k: Some(bag.take(&format!("{prefix}.interact.w_k"), &[c, c])?),
            w_v: Some(bag.take(&format!("{prefix}.interact.w_v"), &[c, c])?),
            input_map: None,
            out_map: bag.take(&format!("{prefix}.interact.out_map"), &[c, c])?,
            b_q: None,
            b_k: None,
            b_v: None,
            b_out: None,
        },
        adaln_self: take_adaln(bag, &format!("{prefix}.adaln_self"), ch, c)?,
        self_perception: crate::attention::KernelWeights {
            w_q: None,
            w_k: None,
            w_v: None,
            input_map: None,
            out_map: bag.take(&format!("{prefix}.self_perception.out_map"), &[c, c])?,
            b_q: None,
            b_k: None,
            b_v: None,
            b_out: None,
        },
        mlp: take_mlp(bag, &format!("{prefix}.mlp"), c)?,
    })
}

/// Instrumented MACs per pipeline stage, cross-checked against the
/// analytical formulas.
#[derive(Debug, Clone, Serialize)]
pub struct MacBreakdown {
    pub lifd: u64,
    pub ldmp: u64,
    pub upsample: u64,
    pub total: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsSummary {
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub mpvpe: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accel_err: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LossSummary {
    pub mesh: f64,
    pub joint: f64,
    pub normal: f64,
    pub edge: f64,
    pub total: f64,
    /// Joint loss through the loadable regressor, when one was supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint_regressed: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub m_i: Tensor,
    pub m_f: Tensor,
    pub p_out: Tensor,
    pub macs: MacBreakdown,
    pub metrics: Option<MetricsSummary>,
    pub losses: Option<LossSummary>,
}

fn parity(name: &str, instrumented: u64, analytical: u64) -> Result<u64> {
    if instrumented != analytical {
        return Err(Error::CheckFailed(format!(
            "instrumented {name} MACs ({instrumented}) do not match the analytical model \
             ({analytical})"
        )));
    }
    Ok(instrumented)
}

/// Execute the full pipeline over resolved inputs.
pub fn run_resolved(cfg: &LdmpConfig, inputs: &ResolvedInputs) -> Result<RunOutputs> {
    let mut lifd_ctx = CountingContext::new();
    let hybrid = lifd::run_lifd(&mut lifd_ctx, &inputs.features, &inputs.weights.lifd)?;
    let lifd_macs = parity("stage-1", lifd_ctx.macs(), cost::macs_run_lifd(cfg)?)?;

    let mut ldmp_ctx = CountingContext::new();
    let (m_i, p_out) = engine::run_ldmp(
        &mut ldmp_ctx,
        &hybrid.temporal,
        &inputs.mesh.template,
        &inputs.pose.mid_3d,
        cfg,
        &inputs.weights.ldmp,
    )?;
    let ldmp_macs = parity("stage-2", ldmp_ctx.macs(), cost::macs_run_ldmp(cfg)?)?;

    let mut up_ctx = CountingContext::new();
    let m_f = engine::upsample(
        &mut up_ctx,
        &m_i,
        &inputs.mesh,
        &hybrid.temporal,
        &inputs.weights.ldmp.upsample,
        cfg,
    )?;
    let upsample_macs = parity(
        "upsample",
        up_ctx.macs(),
        cost::macs_upsample(cfg, inputs.mesh.upsample.nnz())?,
    )?;

    let macs = MacBreakdown {
        lifd: lifd_macs,
        ldmp: ldmp_macs,
        upsample: upsample_macs,
        total: lifd_macs + ldmp_macs + upsample_macs,
    };

    let mut metrics_summary = None;
    let mut loss_summary = None;
    if let (Some(gt_mesh), Some(gt_pose)) = (&inputs.gt_mesh, &inputs.gt_pose) {
        let accel = match &inputs.gt_pose_seq {
            Some(seq) if inputs.pose.mid_3d.rank() == 3 && cfg.t >= 3 => {
                Some(metrics::accel_err(&inputs.pose.mid_3d, seq)?)
            }
            _ => None,
        };
        metrics_summary = Some(MetricsSummary {
            mpjpe: metrics::mpjpe(&p_out, gt_pose)?,
            pa_mpjpe: metrics::pa_mpjpe(&p_out, gt_pose)?,
            mpvpe: metrics::mpvpe(&m_f, gt_mesh)?,
            accel_err: accel,
        });
        let parts = LossParts {
            mesh: metrics::loss_mesh(&m_f, gt_mesh)?,
            joint: metrics::loss_joint(&p_out, gt_pose)?,
            normal: metrics::loss_normal(&m_f, &inputs.mesh.faces, gt_mesh)?,
            edge: metrics::loss_edge(&m_f, &inputs.mesh.faces, gt_mesh)?,
        };
        let joint_regressed = match &inputs.joint_regressor {
            Some(reg) => {
                let mut free = CountingContext::disabled();
                let from_pred = metrics::regress_joints(&mut free, reg, &m_f)?;
                let from_gt = metrics::regress_joints(&mut free, reg, gt_mesh)?;
                Some(metrics::loss_joint(&from_pred, &from_gt)?)
            }
            None => None,
        };
        loss_summary = Some(LossSummary {
            mesh: parts.mesh,
            joint: parts.joint,
            normal: parts.normal,
            edge: parts.edge,
            total: metrics::total_loss(&parts, &LossWeights::default()),
            joint_regressed,
        });
    }

    Ok(RunOutputs {
        m_i,
        m_f,
        p_out,
        macs,
        metrics: metrics_summary,
        losses: loss_summary,
    })
}

/// Resolve a manifest and run the pipeline.
pub fn run_forward(manifest: &RunManifest, base: &Path) -> Result<RunOutputs> {
    let inputs = manifest.resolve(base)?;
    run_resolved(&manifest.config, &inputs)
}

#[derive(Serialize)]
struct RunReport<'a> {
    config: &'a LdmpConfig,
    macs: &'a MacBreakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: &'a Option<MetricsSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    losses: &'a Option<LossSummary>,
    outputs: BTreeMap<&'static str, String>,
}

/// Write the intermediate mesh, detailed mesh, refined pose and the run
/// report. Returns the written paths.
pub fn write_outputs(
    out_dir: &Path,
    outputs: &RunOutputs,
    manifest: &RunManifest,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let m_i_path = out_dir.join("mesh_intermediate.bin");
    let m_f_path = out_dir.join("mesh_detailed.bin");
    let p_out_path = out_dir.join("pose_out.bin");
    io::write_tensor(&m_i_path, &outputs.m_i)?;
    io::write_tensor(&m_f_path, &outputs.m_f)?;
    io::write_tensor(&p_out_path, &outputs.p_out)?;
    // file names only: the report must stay byte-identical across runs
    // into different directories
    let mut listed = BTreeMap::new();
    listed.insert("mesh_intermediate", "mesh_intermediate.bin".to_string());
    listed.insert("mesh_detailed", "mesh_detailed.bin".to_string());
    listed.insert("pose_out", "pose_out.bin".to_string());
    let report = RunReport {
        config: &manifest.config,
        macs: &outputs.macs,
        metrics: &outputs.metrics,
        losses: &outputs.losses,
        outputs: listed,
    };
    let report_path = out_dir.join("run_report.json");
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    std::fs::write(&report_path, text).map_err(|e| Error::io(&report_path, e))?;
    Ok(vec![m_i_path, m_f_path, p_out_path, report_path])
}
