//! Run manifests: the JSON front door of the harness.
//!
//! A manifest carries the full [`LdmpConfig`], input paths (or the
//! synthetic flag), and report options. Resolution is fail-fast: every
//! referenced file is loaded and validated against the config before any
//! computation starts, so a bad input never leaves partial outputs behind.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::pipeline::PipelineWeights;
use crate::engine::{LdmpConfig, MeshState, PoseState};
use crate::error::{Error, Result};
use crate::io;
use crate::lifd::FeatureSequence;
use crate::synthetic;
use crate::tensor::Tensor;

/// Input file locations, all optional. Relative paths resolve against the
/// manifest's directory.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    /// `t x c_img` f32 tensor.
    pub features: Option<PathBuf>,
    /// `j x 3` or `t x j x 3` f32 tensor.
    pub pose_mid: Option<PathBuf>,
    /// `t x j x 2` f32 tensor, ingest-only.
    pub pose_2d: Option<PathBuf>,
    /// Mesh asset manifest (template + faces + upsampling matrix).
    pub mesh: Option<PathBuf>,
    /// Weight bundle manifest.
    pub weights: Option<PathBuf>,
    /// `j x n_fine` f32 joint regressor.
    pub joint_regressor: Option<PathBuf>,
    /// `n_fine x 3` ground-truth mesh.
    pub gt_mesh: Option<PathBuf>,
    /// `j x 3` ground-truth pose.
    pub gt_pose: Option<PathBuf>,
    /// `t x j x 3` ground-truth pose sequence (enables the acceleration
    /// metric).
    pub gt_pose_seq: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunManifest {
    pub config: LdmpConfig,
    /// Generate seeded synthetic features/poses instead of reading files.
    pub synthetic: bool,
    pub inputs: InputPaths,
    /// Compute evaluation metrics and losses (requires ground truth).
    pub compute_metrics: bool,
    /// Timing repeats.
    pub repeats: usize,
    /// Output directory override.
    pub out_dir: Option<PathBuf>,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            config: LdmpConfig::default(),
            synthetic: true,
            inputs: InputPaths::default(),
            compute_metrics: false,
            repeats: 20,
            out_dir: None,
        }
    }
}

/// Everything loaded, generated and validated; computation can no longer
/// fail on missing or malformed inputs.
#[derive(Debug, Clone)]
pub struct ResolvedInputs {
    pub features: FeatureSequence,
    pub pose: PoseState,
    pub mesh: MeshState,
    pub weights: PipelineWeights,
    pub joint_regressor: Option<Tensor>,
    pub gt_mesh: Option<Tensor>,
    pub gt_pose: Option<Tensor>,
    pub gt_pose_seq: Option<Tensor>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let manifest: RunManifest = serde_json::from_slice(&bytes).map_err(|e| {
            Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            )
        })?;
        Ok(manifest)
    }

    fn path(&self, base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    fn require<'a>(&self, p: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
        p.as_ref().ok_or_else(|| {
            Error::Config(format!(
                "{what} path is required when synthetic inputs are disabled"
            ))
        })
    }

    /// Load every referenced input (or synthesize it) and validate the
    /// whole set against the config.
    pub fn resolve(&self, base: &Path) -> Result<ResolvedInputs> {
        let cfg = &self.config;
        cfg.validate()?;

        let features = if self.synthetic {
            synthetic::features(cfg.t, cfg.c_img, cfg.seed)
        } else {
            io::read_tensor(&self.path(base, self.require(&self.inputs.features, "features")?))?
        };
        if features.shape() != [cfg.t, cfg.c_img] {
            return Err(Error::Validation(format!(
                "features shape {:?} does not match config [t={}, c_img={}]",
                features.shape(),
                cfg.t,
                cfg.c_img
            )));
        }
        let features = FeatureSequence::new(features)?;

        let pose_mid = if self.synthetic {
            synthetic::pose_sequence(cfg.t, cfg.j, cfg.seed)
        } else {
            io::read_tensor(&self.path(base, self.require(&self.inputs.pose_mid, "pose_mid")?))?
        };
        let pose_ok = match pose_mid.rank() {
            2 => pose_mid.shape() == [cfg.j, 3],
            3 => pose_mid.shape() == [cfg.t, cfg.j, 3],
            _ => false,
        };
        if !pose_ok {
            return Err(Error::Validation(format!(
                "pose_mid shape {:?} does not match config (j={}, t={})",
                pose_mid.shape(),
                cfg.j,
                cfg.t
            )));
        }

        let pose_2d = match &self.inputs.pose_2d {
            Some(p) if !self.synthetic => {
                let t = io::read_tensor(&self.path(base, p))?;
                if t.rank() != 3 || t.shape() != [cfg.t, cfg.j, 2] {
                    return Err(Error::Validation(format!(
                        "pose_2d shape {:?} does not match [t={}, j={}, 2]",
                        t.shape(),
                        cfg.t,
                        cfg.j
                    )));
                }
                Some(t)
            }
            _ => None,
        };

        let mesh = match &self.inputs.mesh {
            Some(p) => io::load_mesh(&self.path(base, p))?,
            None => synthetic::mesh_state(cfg.n_vertices, cfg.n_fine, cfg.seed)?,
        };
        if mesh.n_coarse() != cfg.n_vertices || mesh.n_fine() != cfg.n_fine {
            return Err(Error::Validation(format!(
                "mesh assets are {} -> {} vertices, config says {} -> {}",
                mesh.n_coarse(),
                mesh.n_fine(),
                cfg.n_vertices,
                cfg.n_fine
            )));
        }

        let weights = match &self.inputs.weights {
            Some(p) => {
                let entries = io::load_bundle(&self.path(base, p))?;
                PipelineWeights::from_entries(entries, cfg)?
            }
            None => PipelineWeights::seeded(cfg),
        };

        let joint_regressor = match &self.inputs.joint_regressor {
            Some(p) => {
                let t = io::read_tensor(&self.path(base, p))?;
                if t.shape() != [cfg.j, cfg.n_fine] {
                    return Err(Error::Validation(format!(
                        "joint regressor shape {:?} does not match [j={}, n_fine={}]",
                        t.shape(),
                        cfg.j,
                        cfg.n_fine
                    )));
                }
                Some(t)
            }
            None => None,
        };

        let read_gt =
            |p: &Option<PathBuf>, shape: &[usize], what: &str| -> Result<Option<Tensor>> {
                match p {
                    Some(p) => {
                        let t = io::read_tensor(&self.path(base, p))?;
                        if t.shape() != shape {
                            return Err(Error::Validation(format!(
                                "{what} shape {:?} does not match {shape:?}",
                                t.shape()
                            )));
                        }
                        Ok(Some(t))
                    }
                    None => Ok(None),
                }
            };
        let gt_mesh = read_gt(&self.inputs.gt_mesh, &[cfg.n_fine, 3], "gt_mesh")?;
        let gt_pose = read_gt(&self.inputs.gt_pose, &[cfg.j, 3], "gt_pose")?;
        let gt_pose_seq = read_gt(&self.inputs.gt_pose_seq, &[cfg.t, cfg.j, 3], "gt_pose_seq")?;

        if self.compute_metrics && (gt_mesh.is_none() || gt_pose.is_none()) {
            return Err(Error::Config(
                "metrics were requested but gt_mesh and gt_pose are not both supplied".into(),
            ));
        }

        Ok(ResolvedInputs {
            features,
            pose: PoseState {
                mid_3d: pose_mid,
                seq_2d: pose_2d,
                out_3d: None,
            },
            mesh,
            weights,
            joint_regressor,
            gt_mesh,
            gt_pose,
            gt_pose_seq,
        })
    }
}
