//! Acceptance suite: one test per release criterion, each printing a
//! pass/fail line (visible with `--nocapture`).
//!
//! Run with `cargo test -p ldmp --test acceptance`.

mod common;

use std::process::Command;
use std::sync::Mutex;
use std::time::Instant;

use common::*;
use ldmp::attention::{self, KernelWeights};
use ldmp::bench;
use ldmp::cost;
use ldmp::engine::{self, LdmpConfig};
use ldmp::metrics;
use ldmp::tensor::{matmul, CountingContext, Tensor};
use ldmp::wavelet::{dwt_haar, idwt_haar};
use rand::Rng;

// Serializes the two long-running criteria so wall-clock measurements are
// not perturbed when the suite runs multi-threaded.
static HEAVY: Mutex<()> = Mutex::new(());

fn heavy_guard() -> std::sync::MutexGuard<'static, ()> {
    HEAVY.lock().unwrap_or_else(|e| e.into_inner())
}

#[test]
fn criterion_1_dwt_perfect_reconstruction() {
    let start = Instant::now();
    let mut r = rng(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let x = random_t2(&mut r, 16, 2048);
        let back = idwt_haar(&dwt_haar(&x, ldmp::tensor::Axis::Cols).unwrap()).unwrap();
        worst = worst.max(x.max_abs_diff(&back).unwrap());
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(worst < 1e-12, "max roundtrip deviation {worst}");
    assert!(elapsed < 1.0, "reconstruction sweep took {elapsed:.2}s");
    println!(
        "[criterion 1] dwt perfect reconstruction: pass (max deviation {worst:.3e}, {elapsed:.2}s)"
    );
}

#[test]
fn criterion_2_attention_oracle_parity() {
    let mut r = rng(102);
    let mut worst: f64 = 0.0;
    let mut configs = 0;
    for _ in 0..120 {
        let n_q = r.gen_range(1..=16usize);
        let n_kv = r.gen_range(1..=16usize);
        let c = r.gen_range(2..=32usize);
        let w = KernelWeights::attention(c, false, &mut r);
        let xq = random_t3(&mut r, 1, n_q, c);
        let xkv = random_t3(&mut r, 1, n_kv, c);
        let mut ctx = CountingContext::disabled();

        let got = attention::self_attention(&mut ctx, &xq, &w).unwrap();
        let want = naive_attention(&batch_rows(&xq, 0), &batch_rows(&xq, 0), &w);
        worst = worst.max(max_abs_diff_rows(&got.batch(0).unwrap(), &want));

        let got = attention::cross_attention(&mut ctx, &xq, &xkv, &w).unwrap();
        let want = naive_attention(&batch_rows(&xq, 0), &batch_rows(&xkv, 0), &w);
        worst = worst.max(max_abs_diff_rows(&got.batch(0).unwrap(), &want));
        configs += 1;
    }
    assert!(worst < 1e-10, "worst oracle deviation {worst}");
    println!(
        "[criterion 2] attention oracle parity: pass ({configs} configs, max deviation {worst:.3e})"
    );
}

fn random_tiny_config(r: &mut impl Rng, case: u64) -> LdmpConfig {
    let mut cfg = LdmpConfig::tiny(900 + case);
    cfg.j = r.gen_range(2..6);
    cfg.n_vertices = r.gen_range(6..16);
    cfg.n_fine = cfg.n_vertices + r.gen_range(0..20);
    cfg.c_embed = 2 * r.gen_range(2..6);
    cfg.c_hidden = r.gen_range(4..12);
    cfg.r = r.gen_range(1..=cfg.n_vertices.min(cfg.c_embed));
    cfg.n_blocks = r.gen_range(1..3);
    cfg
}

#[test]
fn criterion_3_mac_parity_across_kernels_and_blocks() {
    let mut r = rng(103);
    let mut checked = 0;
    for case in 0..50u64 {
        let n_q = r.gen_range(1..12usize);
        let n_kv = r.gen_range(1..12usize);
        let c = r.gen_range(2..16usize);
        let red = r.gen_range(1..=n_q.min(n_kv).min(c));
        let aw = KernelWeights::attention(c, false, &mut r);
        let lw = KernelWeights::lsp(c, false, case % 2 == 0, &mut r);
        let xq = random_t3(&mut r, 1, n_q, c);
        let xkv = random_t3(&mut r, 1, n_kv, c);

        let mut ctx = CountingContext::new();
        attention::self_attention(&mut ctx, &xq, &aw).unwrap();
        assert_eq!(ctx.macs(), cost::macs_self_attention(n_q, c).unwrap());

        let mut ctx = CountingContext::new();
        attention::cross_attention(&mut ctx, &xq, &xkv, &aw).unwrap();
        assert_eq!(
            ctx.macs(),
            cost::macs_cross_attention(n_q, n_kv, c).unwrap()
        );

        let mut ctx = CountingContext::new();
        attention::lsp(&mut ctx, &xq, red, &lw).unwrap();
        assert_eq!(
            ctx.macs(),
            cost::macs_lsp(n_q, c, red, case % 2 == 0).unwrap()
        );

        let mut ctx = CountingContext::new();
        attention::lcp(&mut ctx, &xq, &xkv, red, &aw).unwrap();
        assert_eq!(ctx.macs(), cost::macs_lcp(n_q, n_kv, c, red).unwrap());

        // full blocks and the dual-branch pass on a random tiny config
        let cfg = random_tiny_config(&mut r, case);
        let weights = bench::PipelineWeights::seeded(&cfg);
        let tf = random_t2(&mut r, 1, cfg.c_hidden)
            .reshape(&[cfg.c_hidden])
            .unwrap();
        let mesh_f = random_t2(&mut r, cfg.n_vertices, cfg.c_embed);
        let pose_f = random_t2(&mut r, cfg.j, cfg.c_embed);
        let mut ctx = CountingContext::new();
        engine::mesh_branch(
            &mut ctx,
            &tf,
            &mesh_f,
            &pose_f,
            &cfg,
            &weights.ldmp.mesh_blocks,
        )
        .unwrap();
        assert_eq!(
            ctx.macs(),
            cfg.n_blocks as u64 * cost::macs_mesh_block(&cfg).unwrap()
        );
        let mut ctx = CountingContext::new();
        engine::pose_branch(
            &mut ctx,
            &tf,
            &pose_f,
            &mesh_f,
            &cfg,
            &weights.ldmp.pose_blocks,
        )
        .unwrap();
        assert_eq!(
            ctx.macs(),
            cfg.n_blocks as u64 * cost::macs_pose_block(&cfg).unwrap()
        );
        let m0 = random_t2(&mut r, cfg.n_vertices, 3);
        let p_mid = random_t2(&mut r, cfg.j, 3);
        let mut ctx = CountingContext::new();
        engine::run_ldmp(&mut ctx, &tf, &m0, &p_mid, &cfg, &weights.ldmp).unwrap();
        assert_eq!(ctx.macs(), cost::macs_run_ldmp(&cfg).unwrap());
        checked += 1;
    }
    println!("[criterion 3] MAC parity (kernels + blocks): pass ({checked} configs, exact)");
}

#[test]
fn criterion_4_lsp_dominance() {
    // formula dominance across a sweep with r <= C
    let mut r = rng(104);
    for _ in 0..200 {
        let n = r.gen_range(1..500usize);
        let c = r.gen_range(1..600usize);
        let red = r.gen_range(1..=c).min(n);
        assert!(
            cost::macs_lsp(n, c, red, false).unwrap() < cost::macs_self_attention(n, c).unwrap(),
            "lsp not dominant at n={n} c={c} r={red}"
        );
    }
    // instrumented reduction at the published mesh-scale configuration
    let (n, c, red) = (431usize, 512usize, 64usize);
    let mut rr = rng(105);
    let aw = KernelWeights::attention(c, false, &mut rr);
    let lw = KernelWeights::lsp(c, false, false, &mut rr);
    let x = random_t3(&mut rr, 1, n, c);
    let mut self_ctx = CountingContext::new();
    attention::self_attention(&mut self_ctx, &x, &aw).unwrap();
    let mut lsp_ctx = CountingContext::new();
    attention::lsp(&mut lsp_ctx, &x, red, &lw).unwrap();
    let reduction = cost::reduction_pct(self_ctx.macs(), lsp_ctx.macs());
    assert!(
        reduction >= 30.0,
        "measured reduction {reduction:.1}% below 30%"
    );
    println!(
        "[criterion 4] LSP dominance: pass (sweep strict; measured reduction {reduction:.1}% at N=431 C=512 r=64)"
    );
}

#[test]
fn criterion_5_block_level_reduction() {
    let cfg = LdmpConfig::default(); // N_v=431, J=17, C=512, r=64
    let report = cost::block_comparison(&cfg).unwrap();
    let stack = report.comparison("stack-ldmp").unwrap();
    assert!(
        stack.mac_reduction_pct >= 20.0,
        "block-level reduction {:.1}% below 20%",
        stack.mac_reduction_pct
    );
    println!(
        "[criterion 5] block-level reduction: pass (measured {:.1}%, published reference 30%)",
        stack.mac_reduction_pct
    );
}

#[test]
fn criterion_6_parallel_correctness_and_speedup() {
    let _guard = heavy_guard();
    let start = Instant::now();
    let cfg = LdmpConfig::default();
    let report = bench::run_timing(&cfg, 20).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(
        report.bitwise_equal,
        "parallel/sequential outputs differ bitwise"
    );
    assert!(elapsed < 30.0, "timing criterion took {elapsed:.1}s");
    if report.cores >= 2 {
        assert!(
            report.speedup >= 1.05,
            "speedup {:.3} below 1.05 on {} cores",
            report.speedup,
            report.cores
        );
        println!(
            "[criterion 6] parallel correctness and speedup: pass (20/20 bitwise, speedup {:.3} on {} cores, {elapsed:.1}s)",
            report.speedup, report.cores
        );
    } else {
        println!(
            "[criterion 6] parallel correctness and speedup: pass (20/20 bitwise; speedup criterion WAIVED on a single-core machine, measured {:.3}; {elapsed:.1}s)",
            report.speedup
        );
    }
}

#[test]
fn criterion_7_low_rank_degeneration() {
    let mut r = rng(107);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        // r == N == C on both kernels makes every pooling an identity
        let n = r.gen_range(2..12usize);
        let lw = KernelWeights::lsp(n, false, false, &mut r);
        let x = random_t3(&mut r, 1, n, n);
        let mut ctx = CountingContext::disabled();
        let got = attention::lsp(&mut ctx, &x, n, &lw).unwrap();
        let rows = batch_rows(&x, 0);
        let want = naive_matmul(&naive_matmul(&rows, &rows), &rows_of(&lw.out_map));
        worst = worst.max(max_abs_diff_rows(&got.batch(0).unwrap(), &want));

        let aw = KernelWeights::lcp(n, false, &mut r);
        let xq = random_t3(&mut r, 1, n, n);
        let xkv = random_t3(&mut r, 1, n, n);
        let got = attention::lcp(&mut ctx, &xq, &xkv, n, &aw).unwrap();
        let q = naive_matmul(&batch_rows(&xq, 0), &rows_of(aw.w_q.as_ref().unwrap()));
        let k = naive_matmul(&batch_rows(&xkv, 0), &rows_of(aw.w_k.as_ref().unwrap()));
        let v = naive_matmul(&batch_rows(&xkv, 0), &rows_of(aw.w_v.as_ref().unwrap()));
        let qk2 = naive_matmul(&q, &k);
        let qk1 = naive_matmul(&k, &q);
        let weights = naive_matmul(&qk1, &transpose(&qk2));
        let mixed = naive_matmul(&transpose(&weights), &v);
        let want = naive_matmul(&mixed, &rows_of(&aw.out_map));
        worst = worst.max(max_abs_diff_rows(&got.batch(0).unwrap(), &want));
    }
    assert!(worst < 1e-10, "dense bilinear deviation {worst}");
    println!("[criterion 7] low-rank degeneration: pass (20 configs, max deviation {worst:.3e})");
}

#[test]
fn criterion_8_metrics_sanity() {
    let mut r = rng(108);
    // pa_mpjpe removes a random similarity transform
    let gt = random_t2(&mut r, 9, 3);
    let theta: f64 = 0.83;
    let (s, c) = theta.sin_cos();
    let rot = Tensor::new(&[3, 3], vec![c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0]).unwrap();
    let mut free = CountingContext::disabled();
    let mut pred = matmul(&mut free, &gt.scale(1.7), &rot).unwrap();
    for (i, v) in pred.data_mut().iter_mut().enumerate() {
        *v += [0.4, -0.9, 0.1][i % 3];
    }
    let pa = metrics::pa_mpjpe(&pred, &gt).unwrap();
    assert!(pa < 1e-6, "pa_mpjpe after similarity transform: {pa}");

    // mpjpe invariant to a global translation
    let mut shifted = gt.clone();
    for (i, v) in shifted.data_mut().iter_mut().enumerate() {
        *v += [2.0, -1.0, 0.5][i % 3];
    }
    let plain = metrics::mpjpe(&shifted, &gt).unwrap();
    assert!(plain < 1e-12, "mpjpe after translation: {plain}");

    // accel_err of time-shifted identical sequences against a hand oracle
    let (t, j) = (7usize, 3usize);
    let wave = |tt: f64, jj: usize, d: usize| (0.6 * tt + jj as f64 * 0.3 + d as f64 * 0.1).sin();
    let build = |offset: f64| -> Tensor {
        let mut data = Vec::with_capacity(t * j * 3);
        for tt in 0..t {
            for jj in 0..j {
                for d in 0..3 {
                    data.push(wave(tt as f64 + offset, jj, d));
                }
            }
        }
        Tensor::new(&[t, j, 3], data).unwrap()
    };
    let base = build(0.0);
    let shifted_seq = build(1.0);
    let got = metrics::accel_err(&shifted_seq, &base).unwrap();
    let mut total = 0.0;
    for tt in 1..t - 1 {
        for jj in 0..j {
            let mut sq = 0.0;
            for d in 0..3 {
                let a_hat = wave((tt + 1) as f64 + 1.0, jj, d) - 2.0 * wave(tt as f64 + 1.0, jj, d)
                    + wave((tt - 1) as f64 + 1.0, jj, d);
                let a_gt = wave((tt + 1) as f64, jj, d) - 2.0 * wave(tt as f64, jj, d)
                    + wave((tt - 1) as f64, jj, d);
                sq += (a_hat - a_gt) * (a_hat - a_gt);
            }
            total += sq.sqrt();
        }
    }
    let want = total / ((t - 2) * j) as f64;
    assert!(
        (got - want).abs() < 1e-9,
        "accel_err {got} vs hand oracle {want}"
    );

    // exact weighted total
    let parts = metrics::LossParts {
        mesh: 1.0,
        joint: 1.0,
        normal: 1.0,
        edge: 1.0,
    };
    let total_loss = metrics::total_loss(&parts, &metrics::LossWeights::default());
    assert_eq!(total_loss, 22.1);
    println!(
        "[criterion 8] metrics sanity: pass (pa_mpjpe {pa:.2e}, accel-err deviation {:.2e}, total_loss(1,1,1,1) == 22.1)",
        (got - want).abs()
    );
}

#[test]
fn criterion_9_end_to_end_shape_and_determinism() {
    let _guard = heavy_guard();
    let start = Instant::now();
    let bin = env!("CARGO_BIN_EXE_ldmp-bench");
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str| {
        let output = Command::new(bin)
            .args(["run", "--synthetic", "--seed", "7", "--out"])
            .arg(dir.path().join(out))
            .output()
            .expect("spawn ldmp-bench");
        assert!(
            output.status.success(),
            "run failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
    };
    run("a");
    run("b");
    let elapsed = start.elapsed().as_secs_f64();

    let shape_of = |out: &str, name: &str| -> Vec<usize> {
        let sidecar: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join(out).join(format!("{name}.json"))).unwrap(),
        )
        .unwrap();
        sidecar["shape"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_u64().unwrap() as usize)
            .collect()
    };
    assert_eq!(shape_of("a", "mesh_intermediate"), vec![431, 3]);
    assert_eq!(shape_of("a", "mesh_detailed"), vec![6890, 3]);
    assert_eq!(shape_of("a", "pose_out"), vec![17, 3]);

    for name in [
        "mesh_intermediate.bin",
        "mesh_detailed.bin",
        "pose_out.bin",
        "run_report.json",
    ] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between invocations");
    }
    assert!(elapsed < 60.0, "end-to-end criterion took {elapsed:.1}s");
    println!(
        "[criterion 9] end-to-end shapes and determinism: pass (431x3 / 6890x3 / 17x3, byte-identical, {elapsed:.1}s)"
    );
}
