//! Seeded synthetic inputs so the harness runs without dataset assets:
//! Gaussian image features, smooth sinusoidal joint trajectories, a
//! column-balanced coarse-to-fine upsampling matrix, and a band-averaging
//! joint regressor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{MeshState, SparseRowMatrix};
use crate::error::Result;
use crate::tensor::Tensor;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box-Muller; avoids ln(0) by sampling the half-open unit interval away
    // from zero.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// `t x c_img` standard-normal image features.
pub fn features(t: usize, c_img: usize, seed: u64) -> Tensor {
    let mut r = rng(seed, 1);
    let data = (0..t * c_img).map(|_| gaussian(&mut r)).collect();
    Tensor::new(&[t, c_img], data).expect("positive extents")
}

/// `t x j x 3` smooth sinusoidal joint trajectories.
pub fn pose_sequence(t: usize, j: usize, seed: u64) -> Tensor {
    let mut r = rng(seed, 2);
    let mut data = Vec::with_capacity(t * j * 3);
    let mut params = Vec::with_capacity(j * 3);
    for _ in 0..j * 3 {
        let center = r.gen_range(-0.5..0.5);
        let amp = r.gen_range(0.05..0.35);
        let omega = r.gen_range(0.2..0.9);
        let phase = r.gen_range(0.0..std::f64::consts::TAU);
        params.push((center, amp, omega, phase));
    }
    for tt in 0..t {
        for &(center, amp, omega, phase) in &params {
            data.push(center + amp * (omega * tt as f64 + phase).sin());
        }
    }
    Tensor::new(&[t, j, 3], data).expect("positive extents")
}

/// `t x j x 2` detections matching the trajectory generator (ingest-only).
pub fn pose_2d_sequence(t: usize, j: usize, seed: u64) -> Tensor {
    let seq = pose_sequence(t, j, seed);
    let mut data = Vec::with_capacity(t * j * 2);
    for tt in 0..t {
        for jj in 0..j {
            data.push(seq.at3(tt, jj, 0));
            data.push(seq.at3(tt, jj, 1));
        }
    }
    Tensor::new(&[t, j, 2], data).expect("positive extents")
}

/// Row-stochastic `n_fine x n_coarse` band-interpolation matrix with
/// uniform column mass.
///
/// Built by the northwest-corner rule on an integer transportation grid:
/// each fine row pours `n_coarse` units left to right, each coarse column
/// holds exactly `n_fine` units. Row sums are exactly 1 (up to one f64
/// division per entry) and every column receives the same total weight, so
/// applying the matrix preserves the centroid of the coarse geometry.
pub fn balanced_upsample(n_fine: usize, n_coarse: usize) -> SparseRowMatrix {
    let mut triplets = Vec::with_capacity(2 * n_fine);
    let mut col = 0usize;
    let mut filled = 0usize; // units already poured into `col`
    for row in 0..n_fine {
        let mut remaining = n_coarse;
        while remaining > 0 {
            let space = n_fine - filled;
            let take = remaining.min(space);
            triplets.push((row, col, take as f64 / n_coarse as f64));
            remaining -= take;
            filled += take;
            if filled == n_fine {
                col += 1;
                filled = 0;
            }
        }
    }
    SparseRowMatrix::from_triplets(n_fine, n_coarse, &triplets)
        .expect("northwest-corner entries are in range by construction")
}

/// Synthetic mesh assets: jittered cylindrical template, strip
/// triangulation over the fine vertices, balanced upsampling matrix.
pub fn mesh_state(n_coarse: usize, n_fine: usize, seed: u64) -> Result<MeshState> {
    let mut r = rng(seed, 3);
    let mut template = Vec::with_capacity(n_coarse * 3);
    for i in 0..n_coarse {
        let frac = i as f64 / n_coarse as f64;
        let theta = frac * std::f64::consts::TAU * 7.0;
        template.push(theta.cos() * 0.3 + 0.02 * gaussian(&mut r));
        template.push(frac * 1.8 - 0.9 + 0.02 * gaussian(&mut r));
        template.push(theta.sin() * 0.3 + 0.02 * gaussian(&mut r));
    }
    let faces = (0..n_fine.saturating_sub(2))
        .map(|i| [i, i + 1, i + 2])
        .collect();
    MeshState::new(
        Tensor::new(&[n_coarse, 3], template)?,
        faces,
        balanced_upsample(n_fine, n_coarse),
    )
}

/// Dense row-stochastic `j x n_fine` regressor: each joint averages a
/// contiguous band of fine vertices.
pub fn joint_regressor(j: usize, n_fine: usize) -> Tensor {
    let mut data = vec![0.0; j * n_fine];
    for jj in 0..j {
        let lo = jj * n_fine / j;
        let hi = (jj + 1) * n_fine / j;
        let w = 1.0 / (hi - lo) as f64;
        for v in lo..hi {
            data[jj * n_fine + v] = w;
        }
    }
    Tensor::new(&[j, n_fine], data).expect("positive extents")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::CountingContext;

    #[test]
    fn generators_are_deterministic_per_seed() {
        let a = features(4, 6, 9);
        let b = features(4, 6, 9);
        assert_eq!(a, b);
        let c = features(4, 6, 10);
        assert!(a.max_abs_diff(&c).unwrap() > 0.0);
        assert_eq!(pose_sequence(5, 3, 1), pose_sequence(5, 3, 1));
    }

    #[test]
    fn pose_2d_matches_the_first_two_trajectory_coordinates() {
        let seq = pose_sequence(4, 2, 6);
        let flat = pose_2d_sequence(4, 2, 6);
        assert_eq!(flat.shape(), &[4, 2, 2]);
        for t in 0..4 {
            for j in 0..2 {
                assert_eq!(flat.at3(t, j, 0), seq.at3(t, j, 0));
                assert_eq!(flat.at3(t, j, 1), seq.at3(t, j, 1));
            }
        }
    }

    #[test]
    fn balanced_upsample_is_row_stochastic_and_column_balanced() {
        for (n_fine, n_coarse) in [(30, 12), (6890, 431), (431, 431), (10, 10)] {
            let m = balanced_upsample(n_fine, n_coarse);
            m.validate_row_stochastic(1e-12).unwrap();
            // column mass must be n_fine / n_coarse everywhere
            let mut col_mass = vec![0.0; n_coarse];
            for (_, c, v) in m.triplets() {
                col_mass[c] += v;
            }
            let expect = n_fine as f64 / n_coarse as f64;
            for (c, mass) in col_mass.iter().enumerate() {
                assert!(
                    (mass - expect).abs() < 1e-9,
                    "column {c} mass {mass} != {expect} ({n_fine}x{n_coarse})"
                );
            }
        }
    }

    #[test]
    fn square_balanced_upsample_is_identity() {
        let m = balanced_upsample(7, 7);
        let x = features(7, 3, 3);
        let mut ctx = CountingContext::new();
        let y = m.apply(&mut ctx, &x).unwrap();
        assert!(y.max_abs_diff(&x).unwrap() < 1e-15);
    }

    #[test]
    fn upsample_preserves_centroid() {
        let m = balanced_upsample(100, 17);
        let x = features(17, 3, 5);
        let mut ctx = CountingContext::new();
        let y = m.apply(&mut ctx, &x).unwrap();
        for d in 0..3 {
            let cx: f64 = (0..17).map(|i| x.at2(i, d)).sum::<f64>() / 17.0;
            let cy: f64 = (0..100).map(|i| y.at2(i, d)).sum::<f64>() / 100.0;
            assert!((cx - cy).abs() < 1e-9, "axis {d}: {cx} vs {cy}");
        }
    }

    #[test]
    fn joint_regressor_rows_sum_to_one() {
        let r = joint_regressor(17, 100);
        for j in 0..17 {
            let sum: f64 = r.row(j).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn mesh_state_passes_validation() {
        let mesh = mesh_state(12, 30, 4).unwrap();
        assert_eq!(mesh.n_coarse(), 12);
        assert_eq!(mesh.n_fine(), 30);
    }
}
