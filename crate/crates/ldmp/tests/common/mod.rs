#![allow(dead_code)] // each test binary uses a different subset

//! Shared helpers for the integration suites: seeded generators and
//! independent naive oracles (plain nested loops, no shared code with the
//! library kernels).

use ldmp::attention::KernelWeights;
use ldmp::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_t2(rng: &mut impl Rng, m: usize, n: usize) -> Tensor {
    let data = (0..m * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(&[m, n], data).unwrap()
}

pub fn random_t3(rng: &mut impl Rng, b: usize, m: usize, n: usize) -> Tensor {
    let data = (0..b * m * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(&[b, m, n], data).unwrap()
}

pub fn rows_of(t: &Tensor) -> Vec<Vec<f64>> {
    assert_eq!(t.rank(), 2);
    (0..t.shape()[0]).map(|i| t.row(i).to_vec()).collect()
}

pub fn batch_rows(t: &Tensor, b: usize) -> Vec<Vec<f64>> {
    rows_of(&t.batch(b).unwrap())
}

pub fn naive_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
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

pub fn transpose(m: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..m[0].len())
        .map(|j| m.iter().map(|row| row[j]).collect())
        .collect()
}

/// Scaled-dot-product attention with a trailing channel map, evaluated
/// with direct per-row arithmetic.
pub fn naive_attention(xq: &[Vec<f64>], xkv: &[Vec<f64>], w: &KernelWeights) -> Vec<Vec<f64>> {
    let wq = rows_of(w.w_q.as_ref().unwrap());
    let wk = rows_of(w.w_k.as_ref().unwrap());
    let wv = rows_of(w.w_v.as_ref().unwrap());
    let wo = rows_of(&w.out_map);
    let c = wq.len();
    let q = naive_matmul(xq, &wq);
    let k = naive_matmul(xkv, &wk);
    let v = naive_matmul(xkv, &wv);
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
    naive_matmul(&mixed, &wo)
}

pub fn max_abs_diff_rows(t: &Tensor, rows: &[Vec<f64>]) -> f64 {
    let n = rows[0].len();
    let mut worst: f64 = 0.0;
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            worst = worst.max((t.data()[i * n + j] - v).abs());
        }
    }
    worst
}
