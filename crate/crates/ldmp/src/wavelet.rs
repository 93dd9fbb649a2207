//! Single-level orthonormal Haar transform and its inverse along a chosen
//! axis.
//!
//! Analysis: `low[k] = (x[2k] + x[2k+1]) / sqrt(2)`,
//! `high[k] = (x[2k] - x[2k+1]) / sqrt(2)`. The 2x2 analysis matrix is
//! orthogonal, so the transform preserves energy and reconstructs exactly.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::tensor::{Axis, Tensor};

/// Approximation (`low`) and detail (`high`) halves of a transformed
/// tensor, plus enough bookkeeping to invert.
#[derive(Debug, Clone)]
pub struct WaveletPair {
    pub low: Tensor,
    pub high: Tensor,
    pub axis: Axis,
    pub original_extent: usize,
}

impl WaveletPair {
    /// Assemble a pair from separately produced halves (used when the two
    /// branches of a network transform `low` and `high` independently).
    pub fn from_halves(low: Tensor, high: Tensor, axis: Axis) -> Result<Self> {
        if low.shape() != high.shape() {
            return Err(Error::Dimension(format!(
                "wavelet halves must share a shape, got {:?} and {:?}",
                low.shape(),
                high.shape()
            )));
        }
        let extent = match (low.rank(), axis) {
            (1, _) => low.shape()[0],
            (2, Axis::Rows) => low.shape()[0],
            (2, Axis::Cols) => low.shape()[1],
            _ => {
                return Err(Error::Dimension(format!(
                    "wavelet pair supports rank 1-2, got {:?}",
                    low.shape()
                )))
            }
        };
        Ok(Self {
            low,
            high,
            axis,
            original_extent: extent * 2,
        })
    }
}

fn check_even(extent: usize, axis: Axis) -> Result<()> {
    if extent % 2 != 0 {
        return Err(Error::Dimension(format!(
            "extent {extent} along {axis:?} is odd; pad the input to an even \
             length before transforming (no silent padding is performed)"
        )));
    }
    Ok(())
}

/// Single-level Haar analysis of a rank-1 or rank-2 tensor along `axis`.
pub fn dwt_haar(x: &Tensor, axis: Axis) -> Result<WaveletPair> {
    match x.rank() {
        1 => {
            let n = x.shape()[0];
            check_even(n, axis)?;
            let h = n / 2;
            let mut low = Vec::with_capacity(h);
            let mut high = Vec::with_capacity(h);
            for k in 0..h {
                let a = x.data()[2 * k];
                let b = x.data()[2 * k + 1];
                low.push((a + b) * FRAC_1_SQRT_2);
                high.push((a - b) * FRAC_1_SQRT_2);
            }
            Ok(WaveletPair {
                low: Tensor::new(&[h], low)?,
                high: Tensor::new(&[h], high)?,
                axis,
                original_extent: n,
            })
        }
        2 => {
            let (rows, cols) = (x.shape()[0], x.shape()[1]);
            match axis {
                Axis::Cols => {
                    check_even(cols, axis)?;
                    let h = cols / 2;
                    let mut low = Vec::with_capacity(rows * h);
                    let mut high = Vec::with_capacity(rows * h);
                    for r in 0..rows {
                        let row = x.row(r);
                        for k in 0..h {
                            let a = row[2 * k];
                            let b = row[2 * k + 1];
                            low.push((a + b) * FRAC_1_SQRT_2);
                            high.push((a - b) * FRAC_1_SQRT_2);
                        }
                    }
                    Ok(WaveletPair {
                        low: Tensor::new(&[rows, h], low)?,
                        high: Tensor::new(&[rows, h], high)?,
                        axis,
                        original_extent: cols,
                    })
                }
                Axis::Rows => {
                    check_even(rows, axis)?;
                    let h = rows / 2;
                    let mut low = vec![0.0; h * cols];
                    let mut high = vec![0.0; h * cols];
                    for k in 0..h {
                        for c in 0..cols {
                            let a = x.at2(2 * k, c);
                            let b = x.at2(2 * k + 1, c);
                            low[k * cols + c] = (a + b) * FRAC_1_SQRT_2;
                            high[k * cols + c] = (a - b) * FRAC_1_SQRT_2;
                        }
                    }
                    Ok(WaveletPair {
                        low: Tensor::new(&[h, cols], low)?,
                        high: Tensor::new(&[h, cols], high)?,
                        axis,
                        original_extent: rows,
                    })
                }
            }
        }
        _ => Err(Error::Dimension(format!(
            "dwt_haar supports rank 1-2, got {:?}",
            x.shape()
        ))),
    }
}

/// Inverse of [`dwt_haar`]: `x[2k] = (low[k] + high[k]) / sqrt(2)`,
/// `x[2k+1] = (low[k] - high[k]) / sqrt(2)`.
pub fn idwt_haar(p: &WaveletPair) -> Result<Tensor> {
    if p.low.shape() != p.high.shape() {
        return Err(Error::Dimension(format!(
            "wavelet halves must share a shape, got {:?} and {:?}",
            p.low.shape(),
            p.high.shape()
        )));
    }
    let merge = |l: f64, h: f64| ((l + h) * FRAC_1_SQRT_2, (l - h) * FRAC_1_SQRT_2);
    match p.low.rank() {
        1 => {
            let h = p.low.shape()[0];
            let mut out = vec![0.0; 2 * h];
            for k in 0..h {
                let (a, b) = merge(p.low.data()[k], p.high.data()[k]);
                out[2 * k] = a;
                out[2 * k + 1] = b;
            }
            Tensor::new(&[2 * h], out)
        }
        2 => {
            let (rows, half) = (p.low.shape()[0], p.low.shape()[1]);
            match p.axis {
                Axis::Cols => {
                    let cols = half * 2;
                    let mut out = vec![0.0; rows * cols];
                    for r in 0..rows {
                        for k in 0..half {
                            let (a, b) = merge(p.low.at2(r, k), p.high.at2(r, k));
                            out[r * cols + 2 * k] = a;
                            out[r * cols + 2 * k + 1] = b;
                        }
                    }
                    Tensor::new(&[rows, cols], out)
                }
                Axis::Rows => {
                    let cols = half;
                    let full = rows * 2;
                    let mut out = vec![0.0; full * cols];
                    for k in 0..rows {
                        for c in 0..cols {
                            let (a, b) = merge(p.low.at2(k, c), p.high.at2(k, c));
                            out[2 * k * cols + c] = a;
                            out[(2 * k + 1) * cols + c] = b;
                        }
                    }
                    Tensor::new(&[full, cols], out)
                }
            }
        }
        _ => Err(Error::Dimension(format!(
            "idwt_haar supports rank 1-2, got {:?}",
            p.low.shape()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_vector_has_no_detail() {
        let c = 3.25;
        let x = Tensor::new(&[4], vec![c; 4]).unwrap();
        let p = dwt_haar(&x, Axis::Cols).unwrap();
        let expect = c * 2.0f64.sqrt();
        for &v in p.low.data() {
            assert!((v - expect).abs() < 1e-12);
        }
        for &v in p.high.data() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn length_two_closed_form() {
        let (a, b) = (1.7, -0.3);
        let x = Tensor::new(&[2], vec![a, b]).unwrap();
        let p = dwt_haar(&x, Axis::Cols).unwrap();
        let s = 2.0f64.sqrt();
        assert!((p.low.data()[0] - (a + b) / s).abs() < 1e-15);
        assert!((p.high.data()[0] - (a - b) / s).abs() < 1e-15);
    }

    #[test]
    fn energy_preserved_on_random_matrix() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let data: Vec<f64> = (0..16 * 2048).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::new(&[16, 2048], data).unwrap();
        let p = dwt_haar(&x, Axis::Cols).unwrap();
        let lhs = x.norm_sq();
        let rhs = p.low.norm_sq() + p.high.norm_sq();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.max(1.0));
    }

    #[test]
    fn odd_extent_instructs_padding() {
        let x = Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let err = dwt_haar(&x, Axis::Cols).unwrap_err();
        assert!(err.to_string().contains("pad"), "{err}");
    }

    #[test]
    fn constant_reconstruction() {
        let c = -2.5;
        let p = WaveletPair {
            low: Tensor::new(&[1], vec![c * 2.0f64.sqrt()]).unwrap(),
            high: Tensor::new(&[1], vec![0.0]).unwrap(),
            axis: Axis::Cols,
            original_extent: 2,
        };
        let x = idwt_haar(&p).unwrap();
        for &v in x.data() {
            assert!((v - c).abs() < 1e-12);
        }
    }

    #[test]
    fn detail_only_reconstruction() {
        let h = 4.2;
        let p = WaveletPair {
            low: Tensor::new(&[1], vec![0.0]).unwrap(),
            high: Tensor::new(&[1], vec![h]).unwrap(),
            axis: Axis::Cols,
            original_extent: 2,
        };
        let x = idwt_haar(&p).unwrap();
        let s = 2.0f64.sqrt();
        assert!((x.data()[0] - h / s).abs() < 1e-15);
        assert!((x.data()[1] + h / s).abs() < 1e-15);
    }

    #[test]
    fn roundtrip_random_16x2048() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let data: Vec<f64> = (0..16 * 2048).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = Tensor::new(&[16, 2048], data).unwrap();
        let back = idwt_haar(&dwt_haar(&x, Axis::Cols).unwrap()).unwrap();
        assert!(x.max_abs_diff(&back).unwrap() < 1e-12);
    }

    #[test]
    fn roundtrip_along_rows() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let data: Vec<f64> = (0..8 * 5).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let x = Tensor::new(&[8, 5], data).unwrap();
        let back = idwt_haar(&dwt_haar(&x, Axis::Rows).unwrap()).unwrap();
        assert!(x.max_abs_diff(&back).unwrap() < 1e-12);
    }

    #[test]
    fn mismatched_halves_rejected() {
        let p = WaveletPair {
            low: Tensor::zeros(&[2]).unwrap(),
            high: Tensor::zeros(&[3]).unwrap(),
            axis: Axis::Cols,
            original_extent: 4,
        };
        assert!(matches!(idwt_haar(&p), Err(Error::Dimension(_))));
    }

    #[test]
    fn analysis_matrix_is_orthogonal() {
        // Rows of the 2x2 analysis matrix: [1,1]/sqrt(2) and [1,-1]/sqrt(2).
        let s = FRAC_1_SQRT_2;
        let rows = [[s, s], [s, -s]];
        for i in 0..2 {
            for j in 0..2 {
                let dot: f64 = (0..2).map(|k| rows[i][k] * rows[j][k]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn linearity_of_analysis() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (alpha, beta) = (0.7, -1.9);
        let xd: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let yd: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let x = Tensor::new(&[12], xd).unwrap();
        let y = Tensor::new(&[12], yd).unwrap();
        let combo = x.scale(alpha).add(&y.scale(beta)).unwrap();
        let pc = dwt_haar(&combo, Axis::Cols).unwrap();
        let px = dwt_haar(&x, Axis::Cols).unwrap();
        let py = dwt_haar(&y, Axis::Cols).unwrap();
        let low_ref = px.low.scale(alpha).add(&py.low.scale(beta)).unwrap();
        let high_ref = px.high.scale(alpha).add(&py.high.scale(beta)).unwrap();
        assert!(pc.low.max_abs_diff(&low_ref).unwrap() < 1e-9);
        assert!(pc.high.max_abs_diff(&high_ref).unwrap() < 1e-9);
    }
}
