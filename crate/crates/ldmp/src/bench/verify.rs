//! The verification suite behind `ldmp-bench verify`: wavelet
//! reconstruction, attention oracle parity, MAC parity, and
//! parallel/sequential equality, with an optional injected fault to prove
//! the suite actually catches regressions.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::attention::{self, KernelWeights};
use crate::bench::pipeline::PipelineWeights;
use crate::cost;
use crate::engine::{self, ExecMode, LdmpConfig};
use crate::error::{Error, Result};
use crate::synthetic;
use crate::tensor::{Axis, CountingContext, Tensor};
use crate::wavelet::{dwt_haar, idwt_haar, WaveletPair};

/// Deliberate corruption modes for exercising the suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultInjection {
    /// Negate the detail coefficients between analysis and synthesis.
    DwtSign,
}

impl FromStr for FaultInjection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dwt-sign" => Ok(Self::DwtSign),
            other => Err(Error::Config(format!(
                "unknown fault '{other}' (expected: dwt-sign)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Measured deviation in the check's own unit (absolute difference for
    /// numeric checks, differing element count for the bitwise check).
    pub deviation: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

fn check(name: &str, deviation: f64, threshold: f64, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed: deviation <= threshold,
        deviation,
        threshold,
        detail,
    }
}

fn dwt_roundtrip_check(cfg: &LdmpConfig, fault: Option<FaultInjection>) -> Result<CheckResult> {
    let x = synthetic::features(cfg.t, cfg.c_img, cfg.seed);
    let mut pair = dwt_haar(&x, Axis::Cols)?;
    if fault == Some(FaultInjection::DwtSign) {
        pair = WaveletPair::from_halves(pair.low.clone(), pair.high.scale(-1.0), pair.axis)?;
    }
    let back = idwt_haar(&pair)?;
    let deviation = x.max_abs_diff(&back)?;
    Ok(check(
        "dwt-roundtrip",
        deviation,
        1e-12,
        format!(
            "max |idwt(dwt(x)) - x| over a {}x{} input",
            cfg.t, cfg.c_img
        ),
    ))
}

// Independent plain-loop attention used as the oracle; shares no code with
// the kernel implementations.
fn naive_attention(xq: &[Vec<f64>], xkv: &[Vec<f64>], w: &KernelWeights) -> Vec<Vec<f64>> {
    let mat =
        |t: &Tensor| -> Vec<Vec<f64>> { (0..t.shape()[0]).map(|i| t.row(i).to_vec()).collect() };
    let mul = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<Vec<f64>> {
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
    };
    let wq = mat(w.w_q.as_ref().unwrap());
    let wk = mat(w.w_k.as_ref().unwrap());
    let wv = mat(w.w_v.as_ref().unwrap());
    let wo = mat(&w.out_map);
    let c = wq.len();
    let q = mul(xq, &wq);
    let k = mul(xkv, &wk);
    let v = mul(xkv, &wv);
    let scale = 1.0 / (c as f64).sqrt();
    let mut mixed = vec![vec![0.0; c]; q.len()];
    for i in 0..q.len() {
        let logits: Vec<f64> = k
            .iter()
            .map(|kr| q[i].iter().zip(kr).map(|(a, b)| a * b).sum::<f64>() * scale)
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let denom: f64 = exps.iter().sum();
        for (jj, vr) in v.iter().enumerate() {
            let a = exps[jj] / denom;
            for (o, &vv) in mixed[i].iter_mut().zip(vr) {
                *o += a * vv;
            }
        }
    }
    mul(&mixed, &wo)
}

fn attention_oracle_check(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for _ in 0..20 {
        let n_q = rng.gen_range(1..9usize);
        let n_kv = rng.gen_range(1..9usize);
        let c = rng.gen_range(2..16usize);
        let w = KernelWeights::attention(c, false, &mut rng);
        let rows = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect()
        };
        let xq_rows = rows(&mut rng, n_q);
        let xkv_rows = rows(&mut rng, n_kv);
        let flat = |rows: &[Vec<f64>]| -> Vec<f64> { rows.iter().flatten().copied().collect() };
        let xq = Tensor::new(&[1, n_q, c], flat(&xq_rows))?;
        let xkv = Tensor::new(&[1, n_kv, c], flat(&xkv_rows))?;

        let mut ctx = CountingContext::disabled();
        let got_self = attention::self_attention(&mut ctx, &xq, &w)?;
        let want_self = naive_attention(&xq_rows, &xq_rows, &w);
        let got_cross = attention::cross_attention(&mut ctx, &xq, &xkv, &w)?;
        let want_cross = naive_attention(&xq_rows, &xkv_rows, &w);
        for (got, want) in [(got_self, want_self), (got_cross, want_cross)] {
            for (i, row) in want.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    worst = worst.max((got.at3(0, i, j) - v).abs());
                }
            }
        }
        cases += 2;
    }
    Ok(check(
        "attention-oracle-parity",
        worst,
        1e-10,
        format!("max |kernel - naive| over {cases} random self/cross cases"),
    ))
}

fn mac_parity_check(seed: u64) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0de);
    let mut worst: u64 = 0;
    for _ in 0..10 {
        let n_q = rng.gen_range(1..8usize);
        let n_kv = rng.gen_range(1..8usize);
        let c = rng.gen_range(2..10usize);
        let r = rng.gen_range(1..=n_q.min(n_kv).min(c));
        let aw = KernelWeights::attention(c, false, &mut rng);
        let lw = KernelWeights::lsp(c, false, false, &mut rng);
        let rand_t3 = |rng: &mut ChaCha8Rng, n: usize| -> Result<Tensor> {
            Tensor::new(
                &[1, n, c],
                (0..n * c).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
        };
        let xq = rand_t3(&mut rng, n_q)?;
        let xkv = rand_t3(&mut rng, n_kv)?;
        let runs: [(u64, u64); 4] = [
            {
                let mut ctx = CountingContext::new();
                attention::self_attention(&mut ctx, &xq, &aw)?;
                (ctx.macs(), cost::macs_self_attention(n_q, c)?)
            },
            {
                let mut ctx = CountingContext::new();
                attention::cross_attention(&mut ctx, &xq, &xkv, &aw)?;
                (ctx.macs(), cost::macs_cross_attention(n_q, n_kv, c)?)
            },
            {
                let mut ctx = CountingContext::new();
                attention::lsp(&mut ctx, &xq, r, &lw)?;
                (ctx.macs(), cost::macs_lsp(n_q, c, r, false)?)
            },
            {
                let mut ctx = CountingContext::new();
                attention::lcp(&mut ctx, &xq, &xkv, r, &aw)?;
                (ctx.macs(), cost::macs_lcp(n_q, n_kv, c, r)?)
            },
        ];
        for (instrumented, analytical) in runs {
            worst = worst.max(instrumented.abs_diff(analytical));
        }
    }
    // and one full dual-branch pass
    let cfg = LdmpConfig::tiny(seed);
    let weights = PipelineWeights::seeded(&cfg);
    let m0 = synthetic::mesh_state(cfg.n_vertices, cfg.n_fine, cfg.seed)?.template;
    let p_mid = synthetic::pose_sequence(cfg.t, cfg.j, cfg.seed);
    let tf = synthetic::features(1, cfg.c_hidden, cfg.seed).reshape(&[cfg.c_hidden])?;
    let mut ctx = CountingContext::new();
    engine::run_ldmp(&mut ctx, &tf, &m0, &p_mid, &cfg, &weights.ldmp)?;
    worst = worst.max(ctx.macs().abs_diff(cost::macs_run_ldmp(&cfg)?));
    Ok(check(
        "mac-parity",
        worst as f64,
        0.0,
        "max |instrumented - analytical| over kernels and a dual-branch pass".into(),
    ))
}

fn parallel_equality_check(seed: u64) -> Result<CheckResult> {
    let mut cfg = LdmpConfig::tiny(seed);
    let weights = PipelineWeights::seeded(&cfg);
    let m0 = synthetic::mesh_state(cfg.n_vertices, cfg.n_fine, cfg.seed)?.template;
    let p_mid = synthetic::pose_sequence(cfg.t, cfg.j, cfg.seed);
    let tf = synthetic::features(1, cfg.c_hidden, cfg.seed).reshape(&[cfg.c_hidden])?;
    cfg.exec_mode = ExecMode::Sequential;
    let mut ctx = CountingContext::new();
    let (mi_s, po_s) = engine::run_ldmp(&mut ctx, &tf, &m0, &p_mid, &cfg, &weights.ldmp)?;
    cfg.exec_mode = ExecMode::Parallel;
    let (mi_p, po_p) = engine::run_ldmp(&mut ctx, &tf, &m0, &p_mid, &cfg, &weights.ldmp)?;
    let differing = |a: &Tensor, b: &Tensor| -> usize {
        a.data()
            .iter()
            .zip(b.data())
            .filter(|(x, y)| x.to_bits() != y.to_bits())
            .count()
    };
    let bits = differing(&mi_s, &mi_p) + differing(&po_s, &po_p);
    Ok(check(
        "parallel-sequential-equality",
        bits as f64,
        0.0,
        "count of output elements whose bit patterns differ across modes".into(),
    ))
}

/// Run the four checks. `fault` corrupts the wavelet roundtrip on purpose.
pub fn run_verify(cfg: &LdmpConfig, fault: Option<FaultInjection>) -> Result<VerifyReport> {
    cfg.validate()?;
    let checks = vec![
        dwt_roundtrip_check(cfg, fault)?,
        attention_oracle_check(cfg.seed)?,
        mac_parity_check(cfg.seed)?,
        parallel_equality_check(cfg.seed)?,
    ];
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { passed, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_run_passes_every_check() {
        let report = run_verify(&LdmpConfig::tiny(1), None).unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.checks.len(), 4);
    }

    #[test]
    fn injected_dwt_fault_is_caught_with_order_one_deviation() {
        let report = run_verify(&LdmpConfig::tiny(1), Some(FaultInjection::DwtSign)).unwrap();
        assert!(!report.passed);
        let dwt = &report.checks[0];
        assert!(!dwt.passed);
        assert!(dwt.deviation > 0.1, "deviation {}", dwt.deviation);
        // the other checks still pass
        assert!(report.checks[1..].iter().all(|c| c.passed));
    }

    #[test]
    fn fault_parser_accepts_known_names_only() {
        assert_eq!(
            "dwt-sign".parse::<FaultInjection>().unwrap(),
            FaultInjection::DwtSign
        );
        assert!("nope".parse::<FaultInjection>().is_err());
    }
}
