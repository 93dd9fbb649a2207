//! Dense f64 array substrate (rank 1-3) with an instrumented MAC counter.
//!
//! Every multiply-accumulate performed by the higher-level kernels flows
//! through the operations in this module, so a [`CountingContext`] threaded
//! through a computation yields an exact operation count. The billing
//! convention: one MAC per scalar multiply in `matmul`/`conv`, one MAC per
//! input element for pooling (scale-and-accumulate view); softmax
//! exponentials, plain additions and bias additions are free.

use crate::error::{Error, Result};

/// Dense row-major tensor. Rank 1, 2 or 3.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(Error::Dimension(format!(
                "tensor rank must be 1-3, got shape {shape:?}"
            )));
        }
        if shape.iter().any(|&e| e == 0) {
            return Err(Error::Dimension(format!(
                "tensor extents must be positive, got shape {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} implies {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        Self::new(shape, vec![0.0; len])
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Element of a rank-2 tensor.
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    /// Element of a rank-3 tensor.
    pub fn at3(&self, b: usize, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.rank(), 3);
        self.data[(b * self.shape[1] + i) * self.shape[2] + j]
    }

    /// Row `i` of a rank-2 tensor as a slice.
    pub fn row(&self, i: usize) -> &[f64] {
        debug_assert_eq!(self.rank(), 2);
        let n = self.shape[1];
        &self.data[i * n..(i + 1) * n]
    }

    /// Copy of batch slice `b` of a rank-3 tensor, as rank 2.
    pub fn batch(&self, b: usize) -> Result<Tensor> {
        if self.rank() != 3 {
            return Err(Error::Dimension(format!(
                "batch slicing needs rank 3, got shape {:?}",
                self.shape
            )));
        }
        let (m, n) = (self.shape[1], self.shape[2]);
        let start = b * m * n;
        Tensor::new(&[m, n], self.data[start..start + m * n].to_vec())
    }

    /// Same data under a new shape (element count must match).
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "elementwise op on mismatched shapes {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "max_abs_diff on mismatched shapes {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// Axis selector for rank-2 operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

/// Explicitly threaded multiply-accumulate counter.
///
/// Never global: concurrent lanes each own a context and the counts are
/// summed on join, so totals stay deterministic.
#[derive(Debug, Clone)]
pub struct CountingContext {
    macs: u64,
    enabled: bool,
}

impl Default for CountingContext {
    fn default() -> Self {
        Self::new()
    }
}

impl CountingContext {
    pub fn new() -> Self {
        Self {
            macs: 0,
            enabled: true,
        }
    }

    pub fn disabled() -> Self {
        Self {
            macs: 0,
            enabled: false,
        }
    }

    pub fn add(&mut self, macs: u64) {
        if self.enabled {
            self.macs += macs;
        }
    }

    pub fn macs(&self) -> u64 {
        self.macs
    }

    pub fn reset(&mut self) {
        self.macs = 0;
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    /// Fold a lane's count into this context (used when joining lanes).
    pub fn absorb(&mut self, lane: &CountingContext) {
        self.add(lane.macs);
    }
}

// B rows processed per cache block; 128 rows of 512 f64 columns stay well
// inside L2.
const MATMUL_K_BLOCK: usize = 128;

fn matmul_into(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    // Row-major ikj, blocked over k so a B block is reused across all
    // output rows, with the in-block k loop unrolled into mul_add chains.
    // The per-element accumulation order over k is fixed, so results are
    // reproducible for a given build. mul_add wants an FMA-capable target
    // (see .cargo/config.toml); without one it falls back to soft-float.
    let mut kb = 0;
    while kb < k {
        let kend = (kb + MATMUL_K_BLOCK).min(k);
        for i in 0..m {
            let a_row = &a[i * k..(i + 1) * k];
            let out_row = &mut out[i * n..(i + 1) * n];
            let mut kk = kb;
            while kk + 4 <= kend {
                let (a0, a1, a2, a3) = (a_row[kk], a_row[kk + 1], a_row[kk + 2], a_row[kk + 3]);
                let b0 = &b[kk * n..(kk + 1) * n];
                let b1 = &b[(kk + 1) * n..(kk + 2) * n];
                let b2 = &b[(kk + 2) * n..(kk + 3) * n];
                let b3 = &b[(kk + 3) * n..(kk + 4) * n];
                for (j, o) in out_row.iter_mut().enumerate() {
                    *o = a3.mul_add(
                        b3[j],
                        a2.mul_add(b2[j], a1.mul_add(b1[j], a0.mul_add(b0[j], *o))),
                    );
                }
                kk += 4;
            }
            while kk < kend {
                let aik = a_row[kk];
                let b_row = &b[kk * n..(kk + 1) * n];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += aik * bv;
                }
                kk += 1;
            }
        }
        kb = kend;
    }
}

/// `A[m x k] * B[k x n]`, billing `m*n*k` MACs.
pub fn matmul(ctx: &mut CountingContext, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 {
        return Err(Error::Dimension(format!(
            "matmul needs rank-2 operands, got {:?} and {:?}",
            a.shape, b.shape
        )));
    }
    let (m, k) = (a.shape[0], a.shape[1]);
    let (k2, n) = (b.shape[0], b.shape[1]);
    if k != k2 {
        return Err(Error::Dimension(format!(
            "matmul inner extents differ: lhs {:?} vs rhs {:?}",
            a.shape, b.shape
        )));
    }
    ctx.add((m * n * k) as u64);
    let mut out = vec![0.0; m * n];
    matmul_into(&a.data, &b.data, m, k, n, &mut out);
    Tensor::new(&[m, n], out)
}

/// Per-slice matmul over a shared batch extent, billing `b*m*n*k` MACs.
pub fn batched_matmul(ctx: &mut CountingContext, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 3 || b.rank() != 3 {
        return Err(Error::Dimension(format!(
            "batched_matmul needs rank-3 operands, got {:?} and {:?}",
            a.shape, b.shape
        )));
    }
    if a.shape[0] != b.shape[0] {
        return Err(Error::Dimension(format!(
            "batched_matmul batch extents differ: lhs {:?} vs rhs {:?}",
            a.shape, b.shape
        )));
    }
    let (batches, m, k) = (a.shape[0], a.shape[1], a.shape[2]);
    let (k2, n) = (b.shape[1], b.shape[2]);
    if k != k2 {
        return Err(Error::Dimension(format!(
            "batched_matmul inner extents differ: lhs {:?} vs rhs {:?}",
            a.shape, b.shape
        )));
    }
    ctx.add((batches * m * n * k) as u64);
    let mut out = vec![0.0; batches * m * n];
    for bi in 0..batches {
        matmul_into(
            &a.data[bi * m * k..(bi + 1) * m * k],
            &b.data[bi * k * n..(bi + 1) * k * n],
            m,
            k,
            n,
            &mut out[bi * m * n..(bi + 1) * m * n],
        );
    }
    Tensor::new(&[batches, m, n], out)
}

/// Row-wise softmax of a rank-2 tensor, stabilized by row-max subtraction.
pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 {
        return Err(Error::Dimension(format!(
            "softmax_rows needs rank 2, got {:?}",
            x.shape
        )));
    }
    let (m, n) = (x.shape[0], x.shape[1]);
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let row = x.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&v| (v - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / sum));
    }
    Tensor::new(&[m, n], out)
}

/// Adaptive average pooling of a rank-2 tensor along one axis.
///
/// Output bin `i` averages the contiguous input range
/// `floor(i*n/target) .. floor((i+1)*n/target)`. Bills one MAC per input
/// element regardless of the target extent.
pub fn adaptive_avg_pool(
    ctx: &mut CountingContext,
    x: &Tensor,
    target: usize,
    axis: Axis,
) -> Result<Tensor> {
    if x.rank() != 2 {
        return Err(Error::Dimension(format!(
            "adaptive_avg_pool needs rank 2, got {:?}",
            x.shape
        )));
    }
    let (rows, cols) = (x.shape[0], x.shape[1]);
    let extent = match axis {
        Axis::Rows => rows,
        Axis::Cols => cols,
    };
    if target < 1 || target > extent {
        return Err(Error::Range(format!(
            "pool target {target} outside 1..={extent} on {axis:?}"
        )));
    }
    ctx.add((rows * cols) as u64);
    let bin = |i: usize| (i * extent / target, (i + 1) * extent / target);
    match axis {
        Axis::Rows => {
            let mut out = vec![0.0; target * cols];
            for i in 0..target {
                let (lo, hi) = bin(i);
                let inv = 1.0 / (hi - lo) as f64;
                for j in 0..cols {
                    let mut acc = 0.0;
                    for r in lo..hi {
                        acc += x.data[r * cols + j];
                    }
                    out[i * cols + j] = acc * inv;
                }
            }
            Tensor::new(&[target, cols], out)
        }
        Axis::Cols => {
            let mut out = vec![0.0; rows * target];
            for r in 0..rows {
                let row = x.row(r);
                for i in 0..target {
                    let (lo, hi) = bin(i);
                    let inv = 1.0 / (hi - lo) as f64;
                    let acc: f64 = row[lo..hi].iter().sum();
                    out[r * target + i] = acc * inv;
                }
            }
            Tensor::new(&[rows, target], out)
        }
    }
}

/// Same-length zero-padded correlation of a rank-1 signal with an
/// odd-length kernel. Bills `n*k` MACs.
pub fn conv1d_depthwise(ctx: &mut CountingContext, x: &Tensor, kernel: &Tensor) -> Result<Tensor> {
    if x.rank() != 1 || kernel.rank() != 1 {
        return Err(Error::Dimension(format!(
            "conv1d_depthwise needs rank-1 signal and kernel, got {:?} and {:?}",
            x.shape, kernel.shape
        )));
    }
    let n = x.shape[0];
    let k = kernel.shape[0];
    if k % 2 == 0 {
        return Err(Error::Config(format!(
            "conv kernel length must be odd for same padding, got {k}"
        )));
    }
    ctx.add((n * k) as u64);
    let half = k / 2;
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, &w) in kernel.data.iter().enumerate() {
            let idx = i as isize + j as isize - half as isize;
            if idx >= 0 && (idx as usize) < n {
                acc += x.data[idx as usize] * w;
            }
        }
        *o = acc;
    }
    Tensor::new(&[n], out)
}

/// Swap the last two axes of a rank-3 tensor.
pub fn transpose_last2(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 3 {
        return Err(Error::Dimension(format!(
            "transpose_last2 needs rank 3, got {:?}",
            x.shape
        )));
    }
    let (b, m, n) = (x.shape[0], x.shape[1], x.shape[2]);
    let mut out = vec![0.0; b * m * n];
    for bi in 0..b {
        for i in 0..m {
            for j in 0..n {
                out[(bi * n + j) * m + i] = x.data[(bi * m + i) * n + j];
            }
        }
    }
    Tensor::new(&[b, n, m], out)
}

/// Transpose of a rank-2 tensor.
pub fn transpose2(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 {
        return Err(Error::Dimension(format!(
            "transpose2 needs rank 2, got {:?}",
            x.shape
        )));
    }
    let (m, n) = (x.shape[0], x.shape[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = x.data[i * n + j];
        }
    }
    Tensor::new(&[n, m], out)
}
