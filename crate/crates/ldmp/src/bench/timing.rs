//! Sequential-vs-parallel wall-time measurement of the dual-branch pass.
//!
//! The measured region is `run_ldmp` only; weight initialization and input
//! generation happen outside the timers. Outputs of the two modes are
//! compared bitwise on every repeat.

use std::time::Instant;

use serde::Serialize;

use crate::engine::{self, ExecMode, LdmpConfig, LdmpWeights};
use crate::error::{Error, Result};
use crate::synthetic;
use crate::tensor::{CountingContext, Tensor};

#[derive(Debug, Clone, Serialize)]
pub struct TimingStats {
    pub mean_ms: f64,
    pub min_ms: f64,
    /// Sample standard deviation; absent for a single repeat.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stddev_ms: Option<f64>,
}

fn stats(samples_ms: &[f64]) -> TimingStats {
    let n = samples_ms.len() as f64;
    let mean = samples_ms.iter().sum::<f64>() / n;
    let min = samples_ms.iter().copied().fold(f64::INFINITY, f64::min);
    let stddev = if samples_ms.len() > 1 {
        let var = samples_ms
            .iter()
            .map(|s| (s - mean) * (s - mean))
            .sum::<f64>()
            / (n - 1.0);
        Some(var.sqrt())
    } else {
        None
    };
    TimingStats {
        mean_ms: mean,
        min_ms: min,
        stddev_ms: stddev,
    }
}

/// Published timing of the dual-branch pass.
#[derive(Debug, Clone, Serialize)]
pub struct PaperTimingReference {
    pub sequential_ms: f64,
    pub parallel_ms: f64,
    pub speedup: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingReport {
    pub repeats: usize,
    pub cores: usize,
    pub sequential: TimingStats,
    pub parallel: TimingStats,
    /// mean(sequential) / mean(parallel).
    pub speedup: f64,
    /// True when every repeat produced bitwise-identical outputs across
    /// modes.
    pub bitwise_equal: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    pub paper_reference: PaperTimingReference,
}

fn bitwise_equal(a: &Tensor, b: &Tensor) -> bool {
    a.shape() == b.shape()
        && a.data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Time `repeats` paired sequential/parallel runs of the dual-branch pass.
pub fn run_timing(cfg: &LdmpConfig, repeats: usize) -> Result<TimingReport> {
    if repeats < 1 {
        return Err(Error::Range(format!("repeats must be >= 1, got {repeats}")));
    }
    cfg.validate()?;
    let mut rng = {
        use rand::SeedableRng;
        rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed)
    };
    let weights = LdmpWeights::seeded(cfg, &mut rng);
    let m0 = synthetic::mesh_state(cfg.n_vertices, cfg.n_fine, cfg.seed)?.template;
    let p_mid = synthetic::pose_sequence(cfg.t, cfg.j, cfg.seed);
    let tf = synthetic::features(1, cfg.c_hidden, cfg.seed).reshape(&[cfg.c_hidden])?;

    let mut seq_ms = Vec::with_capacity(repeats);
    let mut par_ms = Vec::with_capacity(repeats);
    let mut equal = true;
    for _ in 0..repeats {
        let mut seq_cfg = cfg.clone();
        seq_cfg.exec_mode = ExecMode::Sequential;
        let mut ctx = CountingContext::disabled();
        let start = Instant::now();
        let (mi_s, po_s) = engine::run_ldmp(&mut ctx, &tf, &m0, &p_mid, &seq_cfg, &weights)?;
        seq_ms.push(start.elapsed().as_secs_f64() * 1e3);

        let mut par_cfg = cfg.clone();
        par_cfg.exec_mode = ExecMode::Parallel;
        let start = Instant::now();
        let (mi_p, po_p) = engine::run_ldmp(&mut ctx, &tf, &m0, &p_mid, &par_cfg, &weights)?;
        par_ms.push(start.elapsed().as_secs_f64() * 1e3);

        equal &= bitwise_equal(&mi_s, &mi_p) && bitwise_equal(&po_s, &po_p);
    }

    let cores = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let sequential = stats(&seq_ms);
    let parallel = stats(&par_ms);
    let speedup = sequential.mean_ms / parallel.mean_ms;
    let warning = (cores < 2).then(|| {
        "single-core machine: parallel and sequential modes share one core, the speedup \
         criterion is waived"
            .to_string()
    });
    Ok(TimingReport {
        repeats,
        cores,
        sequential,
        parallel,
        speedup,
        bitwise_equal: equal,
        warning,
        paper_reference: PaperTimingReference {
            sequential_ms: 7.515,
            parallel_ms: 6.592,
            speedup: 1.14,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_repeat_has_no_stddev() {
        let report = run_timing(&LdmpConfig::tiny(1), 1).unwrap();
        assert_eq!(report.repeats, 1);
        assert!(report.sequential.stddev_ms.is_none());
        assert!(report.parallel.stddev_ms.is_none());
        assert!(report.bitwise_equal);
    }

    #[test]
    fn repeats_produce_stats_and_equal_outputs() {
        let report = run_timing(&LdmpConfig::tiny(2), 3).unwrap();
        assert!(report.sequential.stddev_ms.is_some());
        assert!(report.bitwise_equal);
        assert!(report.speedup > 0.0);
        assert!((report.paper_reference.speedup - 1.14).abs() < 1e-12);
    }

    #[test]
    fn zero_repeats_rejected() {
        assert!(matches!(
            run_timing(&LdmpConfig::tiny(3), 0),
            Err(Error::Range(_))
        ));
    }
}
