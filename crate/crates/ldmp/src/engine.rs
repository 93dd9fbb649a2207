//! Stage-2 mesh-pose interaction engine.
//!
//! Two branches refine the coarse mesh template and the mid-frame 3D pose
//! under AdaLN conditioning from the temporal feature vector. Each branch
//! stacks blocks of `AdaLN -> LCP -> AdaLN -> LSP -> MLP` with a residual
//! connection around each stage. The branches read only the shared embedded
//! inputs and the conditioning vector, never each other's intermediate
//! outputs, so the fork-join parallel mode is bitwise identical to the
//! sequential mode.

use std::thread;

use serde::{Deserialize, Serialize};

use crate::attention::{lcp, lsp, KernelWeights};
use crate::error::{Error, Result};
use crate::init::uniform_tensor;
use crate::tensor::{matmul, CountingContext, Tensor};

/// How [`run_ldmp`] schedules its two lanes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Sequential,
    Parallel,
}

/// Smooth MLP nonlinearity. Recorded in serialized configs so a run is
/// fully described by its manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Nonlinearity {
    /// tanh-approximated GELU.
    #[serde(rename = "gelu-tanh")]
    GeluTanh,
}

impl Nonlinearity {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Nonlinearity::GeluTanh => {
                let c = (2.0 / std::f64::consts::PI).sqrt();
                0.5 * x * (1.0 + (c * (x + 0.044715 * x * x * x)).tanh())
            }
        }
    }
}

/// Every dimension hyperparameter of the pipeline plus the execution mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdmpConfig {
    /// Input sequence length (frames).
    pub t: usize,
    /// Body joints.
    pub j: usize,
    /// Coarse mesh template vertices.
    pub n_vertices: usize,
    /// Detailed mesh vertices.
    pub n_fine: usize,
    /// Per-frame image feature channels (must be even for the channel-axis
    /// wavelet split).
    pub c_img: usize,
    /// GRU hidden width; the width of the conditioning vector.
    pub c_hidden: usize,
    /// Stage-2 token width C.
    pub c_embed: usize,
    /// Shared reduced extent r used by LSP and LCP.
    pub r: usize,
    /// Blocks per branch.
    pub n_blocks: usize,
    /// High-branch depthwise conv kernel length (odd).
    pub conv_kernel_len: usize,
    pub exec_mode: ExecMode,
    pub seed: u64,
    pub nonlinearity: Nonlinearity,
}

impl Default for LdmpConfig {
    fn default() -> Self {
        Self {
            t: 16,
            j: 17,
            n_vertices: 431,
            n_fine: 6890,
            c_img: 2048,
            c_hidden: 2048,
            c_embed: 512,
            r: 64,
            n_blocks: 2,
            conv_kernel_len: 3,
            exec_mode: ExecMode::Parallel,
            seed: 7,
            nonlinearity: Nonlinearity::GeluTanh,
        }
    }
}

impl LdmpConfig {
    /// Reduced dimensions for fast checks and examples.
    pub fn tiny(seed: u64) -> Self {
        Self {
            t: 4,
            j: 3,
            n_vertices: 12,
            n_fine: 30,
            c_img: 16,
            c_hidden: 10,
            c_embed: 8,
            r: 3,
            n_blocks: 2,
            conv_kernel_len: 3,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (v, name) in [
            (self.t, "t"),
            (self.j, "j"),
            (self.n_vertices, "n_vertices"),
            (self.n_fine, "n_fine"),
            (self.c_img, "c_img"),
            (self.c_hidden, "c_hidden"),
            (self.c_embed, "c_embed"),
            (self.n_blocks, "n_blocks"),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.c_img % 2 != 0 {
            return Err(Error::Config(format!(
                "c_img must be even for the channel-axis wavelet split, got {}",
                self.c_img
            )));
        }
        if self.conv_kernel_len % 2 == 0 {
            return Err(Error::Config(format!(
                "conv_kernel_len must be odd, got {}",
                self.conv_kernel_len
            )));
        }
        if self.r < 1 || self.r > self.n_vertices.min(self.c_embed) {
            return Err(Error::Range(format!(
                "r={} must satisfy 1 <= r <= min(n_vertices={}, c_embed={})",
                self.r, self.n_vertices, self.c_embed
            )));
        }
        Ok(())
    }

    /// Reduced extent actually used by a kernel call: pooling can only
    /// shrink an axis, so `r` is capped by every participating extent.
    pub fn effective_r(&self, extents: &[usize]) -> usize {
        extents.iter().fold(self.r, |acc, &e| acc.min(e))
    }
}

/// Sparse row-major matrix used for coarse-to-fine upsampling and joint
/// regression.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRowMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRowMatrix {
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
        for &(r, c, v) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::Validation(format!(
                    "sparse entry ({r}, {c}) outside {n_rows} x {n_cols}"
                )));
            }
            rows[r].push((c, v));
        }
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            for (c, v) in row {
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            n_rows,
            n_cols,
            indptr,
            indices,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for i in self.indptr[r]..self.indptr[r + 1] {
                out.push((r, self.indices[i], self.values[i]));
            }
        }
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows)
            .map(|r| self.values[self.indptr[r]..self.indptr[r + 1]].iter().sum())
            .collect()
    }

    /// Every row must sum to 1 within `tol`.
    pub fn validate_row_stochastic(&self, tol: f64) -> Result<()> {
        for (r, sum) in self.row_sums().iter().enumerate() {
            if (sum - 1.0).abs() > tol {
                return Err(Error::Validation(format!(
                    "row {r} of the upsampling matrix sums to {sum}, expected 1 within {tol}"
                )));
            }
        }
        Ok(())
    }

    /// `self * x` for a rank-2 `x` with `n_cols` rows. Bills one MAC per
    /// stored entry per output column.
    pub fn apply(&self, ctx: &mut CountingContext, x: &Tensor) -> Result<Tensor> {
        if x.rank() != 2 || x.shape()[0] != self.n_cols {
            return Err(Error::Dimension(format!(
                "sparse apply: matrix is {} x {}, operand is {:?}",
                self.n_rows,
                self.n_cols,
                x.shape()
            )));
        }
        let d = x.shape()[1];
        ctx.add((self.nnz() * d) as u64);
        let mut out = vec![0.0; self.n_rows * d];
        for r in 0..self.n_rows {
            let orow = &mut out[r * d..(r + 1) * d];
            for i in self.indptr[r]..self.indptr[r + 1] {
                let v = self.values[i];
                let xrow = x.row(self.indices[i]);
                for (o, &xv) in orow.iter_mut().zip(xrow) {
                    *o += v * xv;
                }
            }
        }
        Tensor::new(&[self.n_rows, d], out)
    }
}

/// Coarse template, detailed-mesh topology and the row-stochastic
/// coarse-to-fine upsampling matrix.
#[derive(Debug, Clone)]
pub struct MeshState {
    /// Coarse template vertices (`n_coarse x 3`).
    pub template: Tensor,
    /// Triangles of the detailed mesh.
    pub faces: Vec<[usize; 3]>,
    /// `n_fine x n_coarse`, every row sums to 1.
    pub upsample: SparseRowMatrix,
}

impl MeshState {
    pub fn new(
        template: Tensor,
        faces: Vec<[usize; 3]>,
        upsample: SparseRowMatrix,
    ) -> Result<Self> {
        let state = Self {
            template,
            faces,
            upsample,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn n_coarse(&self) -> usize {
        self.template.shape()[0]
    }

    pub fn n_fine(&self) -> usize {
        self.upsample.n_rows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.template.rank() != 2 || self.template.shape()[1] != 3 {
            return Err(Error::Validation(format!(
                "mesh template must be [n, 3], got {:?}",
                self.template.shape()
            )));
        }
        if self.upsample.n_cols() != self.n_coarse() {
            return Err(Error::Validation(format!(
                "upsampling matrix has {} columns but the template has {} vertices",
                self.upsample.n_cols(),
                self.n_coarse()
            )));
        }
        self.upsample.validate_row_stochastic(1e-9)?;
        let n_fine = self.n_fine();
        for (fi, face) in self.faces.iter().enumerate() {
            if face.iter().any(|&v| v >= n_fine) {
                return Err(Error::Topology(format!(
                    "face {fi} = {face:?} references a vertex outside 0..{n_fine}"
                )));
            }
        }
        Ok(())
    }
}

/// Pose-side state around one run: the ingested mid 3D pose, the optional
/// 2D detections it came from, and the refined output once produced.
#[derive(Debug, Clone)]
pub struct PoseState {
    /// `J x 3` (mid-frame) or `T x J x 3` (sequence; the mid frame is
    /// selected when consumed).
    pub mid_3d: Tensor,
    /// Optional `T x J x 2` detections, ingest-only.
    pub seq_2d: Option<Tensor>,
    /// Refined `J x 3` output.
    pub out_3d: Option<Tensor>,
}

/// Affine lift/head `x * W + b`.
#[derive(Debug, Clone)]
pub struct AffineMap {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl AffineMap {
    pub fn seeded(rng: &mut dyn rand::RngCore, d_in: usize, d_out: usize) -> Self {
        Self {
            weight: uniform_tensor(rng, &[d_in, d_out]),
            bias: uniform_tensor(rng, &[d_out]),
        }
    }

    pub fn apply(&self, ctx: &mut CountingContext, x: &Tensor) -> Result<Tensor> {
        let mut y = matmul(ctx, x, &self.weight)?;
        let d = y.shape()[1];
        for (i, v) in y.data_mut().iter_mut().enumerate() {
            *v += self.bias.data()[i % d];
        }
        Ok(y)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            weight: self.weight.scale(s),
            bias: self.bias.scale(s),
        }
    }

    pub fn scalar_count(&self) -> u64 {
        (self.weight.len() + self.bias.len()) as u64
    }
}

/// Conditioning maps for adaptive layer normalization.
#[derive(Debug, Clone)]
pub struct AdalnWeights {
    pub w_gamma: Tensor,
    pub b_gamma: Tensor,
    pub w_beta: Tensor,
    pub b_beta: Tensor,
}

impl AdalnWeights {
    pub fn seeded(rng: &mut dyn rand::RngCore, c_hidden: usize, c: usize) -> Self {
        Self {
            w_gamma: uniform_tensor(rng, &[c_hidden, c]),
            b_gamma: uniform_tensor(rng, &[c]),
            w_beta: uniform_tensor(rng, &[c_hidden, c]),
            b_beta: uniform_tensor(rng, &[c]),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            w_gamma: self.w_gamma.scale(s),
            b_gamma: self.b_gamma.scale(s),
            w_beta: self.w_beta.scale(s),
            b_beta: self.b_beta.scale(s),
        }
    }

    pub fn scalar_count(&self) -> u64 {
        (self.w_gamma.len() + self.b_gamma.len() + self.w_beta.len() + self.b_beta.len()) as u64
    }
}

/// Two pointwise maps with a smooth nonlinearity between, hidden width 2C.
#[derive(Debug, Clone)]
pub struct MlpWeights {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl MlpWeights {
    pub fn seeded(rng: &mut dyn rand::RngCore, c: usize) -> Self {
        Self {
            w1: uniform_tensor(rng, &[c, 2 * c]),
            b1: uniform_tensor(rng, &[2 * c]),
            w2: uniform_tensor(rng, &[2 * c, c]),
            b2: uniform_tensor(rng, &[c]),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            w1: self.w1.scale(s),
            b1: self.b1.scale(s),
            w2: self.w2.scale(s),
            b2: self.b2.scale(s),
        }
    }

    pub fn scalar_count(&self) -> u64 {
        (self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()) as u64
    }
}

/// One branch block: AdaLN -> LCP -> AdaLN -> LSP -> MLP.
#[derive(Debug, Clone)]
pub struct BlockWeights {
    pub adaln_interact: AdalnWeights,
    pub interact: KernelWeights,
    pub adaln_self: AdalnWeights,
    pub self_perception: KernelWeights,
    pub mlp: MlpWeights,
}

impl BlockWeights {
    pub fn seeded(rng: &mut dyn rand::RngCore, c_hidden: usize, c: usize) -> Self {
        Self {
            adaln_interact: AdalnWeights::seeded(rng, c_hidden, c),
            interact: KernelWeights::lcp(c, false, rng),
            adaln_self: AdalnWeights::seeded(rng, c_hidden, c),
            self_perception: KernelWeights::lsp(c, false, false, rng),
            mlp: MlpWeights::seeded(rng, c),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            adaln_interact: self.adaln_interact.scaled(s),
            interact: self.interact.scaled(s),
            adaln_self: self.adaln_self.scaled(s),
            self_perception: self.self_perception.scaled(s),
            mlp: self.mlp.scaled(s),
        }
    }

    pub fn scalar_count(&self) -> u64 {
        self.adaln_interact.scalar_count()
            + self.interact.scalar_count()
            + self.adaln_self.scalar_count()
            + self.self_perception.scalar_count()
            + self.mlp.scalar_count()
    }
}

/// Refinement path from the intermediate mesh to the detailed mesh.
#[derive(Debug, Clone)]
pub struct UpsampleWeights {
    pub embed: AffineMap,
    pub adaln: AdalnWeights,
    pub mlp: MlpWeights,
    pub head: AffineMap,
}

impl UpsampleWeights {
    pub fn seeded(rng: &mut dyn rand::RngCore, c_hidden: usize, c: usize) -> Self {
        Self {
            embed: AffineMap::seeded(rng, 3, c),
            adaln: AdalnWeights::seeded(rng, c_hidden, c),
            mlp: MlpWeights::seeded(rng, c),
            head: AffineMap::seeded(rng, c, 3),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            embed: self.embed.scaled(s),
            adaln: self.adaln.scaled(s),
            mlp: self.mlp.scaled(s),
            head: self.head.scaled(s),
        }
    }

    pub fn scalar_count(&self) -> u64 {
        self.embed.scalar_count()
            + self.adaln.scalar_count()
            + self.mlp.scalar_count()
            + self.head.scalar_count()
    }
}

/// All stage-2 weights.
#[derive(Debug, Clone)]
pub struct LdmpWeights {
    pub embed_mesh: AffineMap,
    pub embed_pose: AffineMap,
    pub mesh_blocks: Vec<BlockWeights>,
    pub pose_blocks: Vec<BlockWeights>,
    pub head_mesh: AffineMap,
    pub head_pose: AffineMap,
    pub upsample: UpsampleWeights,
}

impl LdmpWeights {
    pub fn seeded(cfg: &LdmpConfig, rng: &mut dyn rand::RngCore) -> Self {
        let c = cfg.c_embed;
        let ch = cfg.c_hidden;
        Self {
            embed_mesh: AffineMap::seeded(rng, 3, c),
            embed_pose: AffineMap::seeded(rng, 3, c),
            mesh_blocks: (0..cfg.n_blocks)
                .map(|_| BlockWeights::seeded(rng, ch, c))
                .collect(),
            pose_blocks: (0..cfg.n_blocks)
                .map(|_| BlockWeights::seeded(rng, ch, c))
                .collect(),
            head_mesh: AffineMap::seeded(rng, c, 3),
            head_pose: AffineMap::seeded(rng, c, 3),
            upsample: UpsampleWeights::seeded(rng, ch, c),
        }
    }

    /// Multiply every tensor by `s` (zeroing weights for the residual
    /// identity checks).
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            embed_mesh: self.embed_mesh.scaled(s),
            embed_pose: self.embed_pose.scaled(s),
            mesh_blocks: self.mesh_blocks.iter().map(|b| b.scaled(s)).collect(),
            pose_blocks: self.pose_blocks.iter().map(|b| b.scaled(s)).collect(),
            head_mesh: self.head_mesh.scaled(s),
            head_pose: self.head_pose.scaled(s),
            upsample: self.upsample.scaled(s),
        }
    }

    pub fn scalar_count(&self) -> u64 {
        self.embed_mesh.scalar_count()
            + self.embed_pose.scalar_count()
            + self
                .mesh_blocks
                .iter()
                .chain(&self.pose_blocks)
                .map(|b| b.scalar_count())
                .sum::<u64>()
            + self.head_mesh.scalar_count()
            + self.head_pose.scalar_count()
            + self.upsample.scalar_count()
    }
}

const LN_EPS: f64 = 1e-5;

/// Adaptive layer normalization: per-row layer norm of `h`, then scale by
/// `1 + gamma(cond)` and shift by `beta(cond)` where gamma/beta are affine
/// maps of the conditioning vector.
pub fn adaln(
    ctx: &mut CountingContext,
    h: &Tensor,
    cond: &Tensor,
    w: &AdalnWeights,
) -> Result<Tensor> {
    if h.rank() != 2 {
        return Err(Error::Dimension(format!(
            "adaln expects rank-2 features, got {:?}",
            h.shape()
        )));
    }
    if cond.rank() != 1 {
        return Err(Error::Dimension(format!(
            "adaln expects a rank-1 conditioning vector, got {:?}",
            cond.shape()
        )));
    }
    let (n, c) = (h.shape()[0], h.shape()[1]);
    let ch = cond.shape()[0];
    if w.w_gamma.shape() != [ch, c] || w.w_beta.shape() != [ch, c] {
        return Err(Error::Dimension(format!(
            "adaln maps must be [{ch}, {c}], got {:?} and {:?}",
            w.w_gamma.shape(),
            w.w_beta.shape()
        )));
    }
    let cond_row = cond.reshape(&[1, ch])?;
    let gamma = matmul(ctx, &cond_row, &w.w_gamma)?.add(&w.b_gamma.reshape(&[1, c])?)?;
    let beta = matmul(ctx, &cond_row, &w.w_beta)?.add(&w.b_beta.reshape(&[1, c])?)?;
    let mut out = vec![0.0; n * c];
    for i in 0..n {
        let row = h.row(i);
        let mean = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        for jj in 0..c {
            let normed = (row[jj] - mean) * inv;
            out[i * c + jj] = normed * (1.0 + gamma.data()[jj]) + beta.data()[jj];
        }
    }
    Tensor::new(&[n, c], out)
}

/// Affine lift of template vertices and mid-frame joints into the stage-2
/// token width.
pub fn embed_inputs(
    ctx: &mut CountingContext,
    m0: &Tensor,
    pose: &Tensor,
    w: &LdmpWeights,
) -> Result<(Tensor, Tensor)> {
    check_coords(m0, "mesh template")?;
    check_coords(pose, "pose")?;
    let mesh_f = w.embed_mesh.apply(ctx, m0)?;
    let pose_f = w.embed_pose.apply(ctx, pose)?;
    Ok((mesh_f, pose_f))
}

fn check_coords(x: &Tensor, what: &str) -> Result<()> {
    if x.rank() != 2 || x.shape()[1] != 3 {
        return Err(Error::Dimension(format!(
            "{what} must be [n, 3] coordinates, got {:?}",
            x.shape()
        )));
    }
    Ok(())
}

/// Two pointwise maps with the configured nonlinearity between.
pub fn mlp_forward(
    ctx: &mut CountingContext,
    x: &Tensor,
    w: &MlpWeights,
    nonlin: Nonlinearity,
) -> Result<Tensor> {
    let mut hidden = matmul(ctx, x, &w.w1)?;
    let hw = hidden.shape()[1];
    for (i, v) in hidden.data_mut().iter_mut().enumerate() {
        *v = nonlin.apply(*v + w.b1.data()[i % hw]);
    }
    let mut out = matmul(ctx, &hidden, &w.w2)?;
    let ow = out.shape()[1];
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v += w.b2.data()[i % ow];
    }
    Ok(out)
}

fn block_forward(
    ctx: &mut CountingContext,
    h: &Tensor,
    kv: &Tensor,
    cond: &Tensor,
    cfg: &LdmpConfig,
    bw: &BlockWeights,
) -> Result<Tensor> {
    let n = h.shape()[0];
    let c = h.shape()[1];
    let m = kv.shape()[0];
    let r_interact = cfg.effective_r(&[n, m, c]);
    let r_self = cfg.effective_r(&[n, c]);
    let normed = adaln(ctx, h, cond, &bw.adaln_interact)?;
    let interact = lcp(
        ctx,
        &normed.reshape(&[1, n, c])?,
        &kv.reshape(&[1, m, c])?,
        r_interact,
        &bw.interact,
    )?;
    let h = h.add(&interact.reshape(&[n, c])?)?;
    let normed = adaln(ctx, &h, cond, &bw.adaln_self)?;
    let selfp = lsp(
        ctx,
        &normed.reshape(&[1, n, c])?,
        r_self,
        &bw.self_perception,
    )?;
    let h = h.add(&selfp.reshape(&[n, c])?)?;
    let refined = mlp_forward(ctx, &h, &bw.mlp, cfg.nonlinearity)?;
    h.add(&refined)
}

/// Mesh branch: refine embedded template features against embedded pose
/// features under the conditioning vector.
pub fn mesh_branch(
    ctx: &mut CountingContext,
    tf: &Tensor,
    mesh_f: &Tensor,
    pose_f: &Tensor,
    cfg: &LdmpConfig,
    blocks: &[BlockWeights],
) -> Result<Tensor> {
    let mut h = mesh_f.clone();
    for bw in blocks {
        h = block_forward(ctx, &h, pose_f, tf, cfg, bw)?;
    }
    Ok(h)
}

/// Pose branch: mirror of the mesh branch with query/key-value roles
/// swapped.
pub fn pose_branch(
    ctx: &mut CountingContext,
    tf: &Tensor,
    pose_f: &Tensor,
    mesh_f: &Tensor,
    cfg: &LdmpConfig,
    blocks: &[BlockWeights],
) -> Result<Tensor> {
    let mut h = pose_f.clone();
    for bw in blocks {
        h = block_forward(ctx, &h, mesh_f, tf, cfg, bw)?;
    }
    Ok(h)
}

/// Select the mid frame of a `T x J x 3` sequence (a `J x 3` tensor passes
/// through unchanged).
pub fn mid_frame(p_mid: &Tensor) -> Result<Tensor> {
    match p_mid.rank() {
        2 => {
            check_coords(p_mid, "mid pose")?;
            Ok(p_mid.clone())
        }
        3 => {
            if p_mid.shape()[2] != 3 {
                return Err(Error::Dimension(format!(
                    "pose sequence must be [t, j, 3], got {:?}",
                    p_mid.shape()
                )));
            }
            p_mid.batch(p_mid.shape()[0] / 2)
        }
        _ => Err(Error::Dimension(format!(
            "pose input must be [j, 3] or [t, j, 3], got {:?}",
            p_mid.shape()
        ))),
    }
}

fn lane_context(parent: &CountingContext) -> CountingContext {
    if parent.is_enabled() {
        CountingContext::new()
    } else {
        CountingContext::disabled()
    }
}

fn lane_error(branch: &'static str, e: Error) -> Error {
    Error::Lane {
        branch,
        source: Box::new(e),
    }
}

/// Run both branches over the shared embedded inputs and regress the
/// refined features back to coordinates.
///
/// In `Parallel` mode the pose branch runs on a spawned thread while the
/// main thread computes the mesh branch; both lanes own a private counting
/// context that is folded into `ctx` on join, so counts and outputs are
/// identical across modes.
pub fn run_ldmp(
    ctx: &mut CountingContext,
    tf: &Tensor,
    m0: &Tensor,
    p_mid: &Tensor,
    cfg: &LdmpConfig,
    w: &LdmpWeights,
) -> Result<(Tensor, Tensor)> {
    let pose_coords = mid_frame(p_mid)?;
    let (mesh_f, pose_f) = embed_inputs(ctx, m0, &pose_coords, w)?;

    let mesh_lane = |mut lane: CountingContext| -> Result<(Tensor, CountingContext)> {
        let refined = mesh_branch(&mut lane, tf, &mesh_f, &pose_f, cfg, &w.mesh_blocks)?;
        let m_i = w.head_mesh.apply(&mut lane, &refined)?;
        Ok((m_i, lane))
    };
    let pose_lane = |mut lane: CountingContext| -> Result<(Tensor, CountingContext)> {
        let refined = pose_branch(&mut lane, tf, &pose_f, &mesh_f, cfg, &w.pose_blocks)?;
        let p_out = w.head_pose.apply(&mut lane, &refined)?;
        Ok((p_out, lane))
    };

    let ((m_i, mesh_ctx), (p_out, pose_ctx)) = match cfg.exec_mode {
        ExecMode::Sequential => {
            let mesh = mesh_lane(lane_context(ctx)).map_err(|e| lane_error("mesh", e))?;
            let pose = pose_lane(lane_context(ctx)).map_err(|e| lane_error("pose", e))?;
            (mesh, pose)
        }
        ExecMode::Parallel => {
            let mesh_seed_ctx = lane_context(ctx);
            let pose_seed_ctx = lane_context(ctx);
            thread::scope(|scope| {
                let pose_handle = scope.spawn(move || pose_lane(pose_seed_ctx));
                let mesh = mesh_lane(mesh_seed_ctx).map_err(|e| lane_error("mesh", e));
                let pose = match pose_handle.join() {
                    Ok(res) => res.map_err(|e| lane_error("pose", e)),
                    Err(_) => Err(lane_error(
                        "pose",
                        Error::CheckFailed("lane thread panicked".into()),
                    )),
                };
                Ok::<_, Error>((mesh?, pose?))
            })?
        }
    };
    ctx.absorb(&mesh_ctx);
    ctx.absorb(&pose_ctx);
    Ok((m_i, p_out))
}

/// Refine the intermediate mesh under conditioning and lift it to the
/// detailed resolution through the row-stochastic upsampling matrix.
///
/// The refinement is residual (`M_I` plus a learned correction), so a
/// zero-weight head leaves the coarse coordinates untouched.
pub fn upsample(
    ctx: &mut CountingContext,
    m_i: &Tensor,
    mesh: &MeshState,
    tf: &Tensor,
    w: &UpsampleWeights,
    cfg: &LdmpConfig,
) -> Result<Tensor> {
    check_coords(m_i, "intermediate mesh")?;
    if m_i.shape()[0] != mesh.upsample.n_cols() {
        return Err(Error::Dimension(format!(
            "intermediate mesh has {} vertices but the upsampling matrix expects {}",
            m_i.shape()[0],
            mesh.upsample.n_cols()
        )));
    }
    let embedded = w.embed.apply(ctx, m_i)?;
    let conditioned = adaln(ctx, &embedded, tf, &w.adaln)?;
    let refined = mlp_forward(ctx, &conditioned, &w.mlp, cfg.nonlinearity)?;
    let coords = m_i.add(&w.head.apply(ctx, &refined)?)?;
    mesh.upsample.apply(ctx, &coords)
}
