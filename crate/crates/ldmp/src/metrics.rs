//! Training losses and evaluation metrics for mesh/pose outputs:
//! L1 vertex/joint losses, surface normal and edge losses, the weighted
//! total loss, and MPJPE / PA-MPJPE / MPVPE / ACC-ERR with Procrustes
//! alignment.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::tensor::{matmul, CountingContext, Tensor};

/// Loss term weights. Defaults: mesh 1, joint 1, normal 0.1, edge 20.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_mesh: f64,
    pub lambda_joint: f64,
    pub lambda_normal: f64,
    pub lambda_edge: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_mesh: 1.0,
            lambda_joint: 1.0,
            lambda_normal: 0.1,
            lambda_edge: 20.0,
        }
    }
}

/// The four loss terms of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub mesh: f64,
    pub joint: f64,
    pub normal: f64,
    pub edge: f64,
}

fn check_coords(x: &Tensor, what: &str) -> Result<()> {
    if x.rank() != 2 || x.shape()[1] != 3 {
        return Err(Error::Dimension(format!(
            "{what} must be [n, 3], got {:?}",
            x.shape()
        )));
    }
    Ok(())
}

fn check_same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "{what} shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn l1_mean(predicted: &Tensor, target: &Tensor, what: &str) -> Result<f64> {
    check_same_shape(predicted, target, what)?;
    let n = predicted.len() as f64;
    Ok(predicted
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n)
}

/// Mean absolute coordinate deviation over all vertices.
pub fn loss_mesh(predicted: &Tensor, target: &Tensor) -> Result<f64> {
    check_coords(predicted, "predicted mesh")?;
    l1_mean(predicted, target, "mesh loss")
}

/// Mean absolute coordinate deviation over all joints.
pub fn loss_joint(predicted: &Tensor, target: &Tensor) -> Result<f64> {
    check_coords(predicted, "predicted joints")?;
    l1_mean(predicted, target, "joint loss")
}

/// Regress joints from mesh vertices through a `J x n_vertices` matrix.
pub fn regress_joints(
    ctx: &mut CountingContext,
    regressor: &Tensor,
    mesh: &Tensor,
) -> Result<Tensor> {
    check_coords(mesh, "mesh")?;
    matmul(ctx, regressor, mesh)
}

fn face_vertices(v: &Tensor, face: &[usize; 3], fi: usize) -> Result<[[f64; 3]; 3]> {
    let n = v.shape()[0];
    if face.iter().any(|&i| i >= n) {
        return Err(Error::Topology(format!(
            "face {fi} = {face:?} references a vertex outside 0..{n}"
        )));
    }
    let get = |i: usize| -> [f64; 3] { [v.at2(i, 0), v.at2(i, 1), v.at2(i, 2)] };
    Ok([get(face[0]), get(face[1]), get(face[2])])
}

fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

const DEGENERATE_EDGE: f64 = 1e-12;

/// Sum over faces and their edges of |cos| between the normalized predicted
/// edge and the ground-truth face normal. Degenerate predicted edges and
/// degenerate ground-truth faces contribute zero.
pub fn loss_normal(predicted: &Tensor, faces: &[[usize; 3]], target: &Tensor) -> Result<f64> {
    check_coords(predicted, "predicted mesh")?;
    check_same_shape(predicted, target, "normal loss")?;
    let mut total = 0.0;
    for (fi, face) in faces.iter().enumerate() {
        let pv = face_vertices(predicted, face, fi)?;
        let tv = face_vertices(target, face, fi)?;
        let normal = cross3(sub3(tv[1], tv[0]), sub3(tv[2], tv[0]));
        let nn = norm3(normal);
        if nn < DEGENERATE_EDGE {
            continue;
        }
        let unit_normal = [normal[0] / nn, normal[1] / nn, normal[2] / nn];
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            let edge = sub3(pv[i], pv[j]);
            let len = norm3(edge);
            if len < DEGENERATE_EDGE {
                continue;
            }
            total += (dot3(edge, unit_normal) / len).abs();
        }
    }
    Ok(total)
}

/// Sum over unique face edges of the absolute difference between predicted
/// and ground-truth edge lengths.
pub fn loss_edge(predicted: &Tensor, faces: &[[usize; 3]], target: &Tensor) -> Result<f64> {
    check_coords(predicted, "predicted mesh")?;
    check_same_shape(predicted, target, "edge loss")?;
    let n = predicted.shape()[0];
    let mut edges = BTreeSet::new();
    for (fi, face) in faces.iter().enumerate() {
        if face.iter().any(|&i| i >= n) {
            return Err(Error::Topology(format!(
                "face {fi} = {face:?} references a vertex outside 0..{n}"
            )));
        }
        for (i, j) in [(0, 1), (1, 2), (2, 0)] {
            let (a, b) = (face[i].min(face[j]), face[i].max(face[j]));
            edges.insert((a, b));
        }
    }
    let point = |v: &Tensor, i: usize| [v.at2(i, 0), v.at2(i, 1), v.at2(i, 2)];
    let mut total = 0.0;
    for (a, b) in edges {
        let lp = norm3(sub3(point(predicted, a), point(predicted, b)));
        let lt = norm3(sub3(point(target, a), point(target, b)));
        total += (lp - lt).abs();
    }
    Ok(total)
}

/// Weighted sum of the four loss terms.
pub fn total_loss(parts: &LossParts, w: &LossWeights) -> f64 {
    w.lambda_mesh * parts.mesh
        + w.lambda_joint * parts.joint
        + w.lambda_normal * parts.normal
        + w.lambda_edge * parts.edge
}

/// Similarity transform: `aligned = scale * x * rotation + translation`
/// (row-vector convention).
#[derive(Debug, Clone)]
pub struct Similarity {
    pub scale: f64,
    /// 3x3 proper rotation (det = +1).
    pub rotation: Tensor,
    pub translation: [f64; 3],
}

impl Similarity {
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        check_coords(x, "similarity operand")?;
        let mut free = CountingContext::disabled();
        let mut y = matmul(&mut free, &x.scale(self.scale), &self.rotation)?;
        for (i, v) in y.data_mut().iter_mut().enumerate() {
            *v += self.translation[i % 3];
        }
        Ok(y)
    }
}

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 60;

/// One-sided Jacobi SVD of a 3x3 matrix: `h = u * diag(sigma) * v^T` with
/// orthogonal `u`, `v` and descending non-negative singular values.
///
/// Also returns the off-diagonal norm of the implicit Gram matrix after
/// each sweep; classical Jacobi guarantees it never increases.
fn jacobi_svd3(h: [[f64; 3]; 3]) -> ([[f64; 3]; 3], [f64; 3], [[f64; 3]; 3], Vec<f64>) {
    // columns of b get orthogonalized in place
    let mut b = h;
    let mut v = [[0.0; 3]; 3];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let col_dot =
        |b: &[[f64; 3]; 3], p: usize, q: usize| -> f64 { (0..3).map(|i| b[i][p] * b[i][q]).sum() };
    let off_norm = |b: &[[f64; 3]; 3]| -> f64 {
        let mut s = 0.0;
        for p in 0..3 {
            for q in (p + 1)..3 {
                let g = col_dot(b, p, q);
                s += g * g;
            }
        }
        s.sqrt()
    };
    let mut history = Vec::new();
    for _ in 0..JACOBI_MAX_SWEEPS {
        for p in 0..3 {
            for q in (p + 1)..3 {
                let app = col_dot(&b, p, p);
                let aqq = col_dot(&b, q, q);
                let apq = col_dot(&b, p, q);
                if apq.abs() <= JACOBI_TOL * (app * aqq).sqrt().max(f64::MIN_POSITIVE) {
                    continue;
                }
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..3 {
                    let bp = b[i][p];
                    let bq = b[i][q];
                    b[i][p] = c * bp - s * bq;
                    b[i][q] = s * bp + c * bq;
                    let vp = v[i][p];
                    let vq = v[i][q];
                    v[i][p] = c * vp - s * vq;
                    v[i][q] = s * vp + c * vq;
                }
            }
        }
        let off = off_norm(&b);
        history.push(off);
        let scale = (0..3).map(|p| col_dot(&b, p, p)).sum::<f64>();
        if off <= JACOBI_TOL * scale.sqrt().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    // singular values and ordering
    let mut order = [0usize, 1, 2];
    let mut sigma = [0.0; 3];
    for p in 0..3 {
        sigma[p] = col_dot(&b, p, p).sqrt();
    }
    order.sort_by(|&a, &bb| sigma[bb].partial_cmp(&sigma[a]).unwrap());
    let sigma_sorted = [sigma[order[0]], sigma[order[1]], sigma[order[2]]];
    let mut u = [[0.0; 3]; 3];
    let mut v_sorted = [[0.0; 3]; 3];
    for (new_col, &old_col) in order.iter().enumerate() {
        for i in 0..3 {
            v_sorted[i][new_col] = v[i][old_col];
        }
        if sigma[old_col] > JACOBI_TOL * sigma_sorted[0].max(f64::MIN_POSITIVE) {
            for i in 0..3 {
                u[i][new_col] = b[i][old_col] / sigma[old_col];
            }
        }
    }
    // complete near-null columns of u into an orthonormal basis
    complete_basis(&mut u, sigma_sorted);
    (u, sigma_sorted, v_sorted, history)
}

fn complete_basis(u: &mut [[f64; 3]; 3], sigma: [f64; 3]) {
    let col = |u: &[[f64; 3]; 3], c: usize| [u[0][c], u[1][c], u[2][c]];
    let set = |u: &mut [[f64; 3]; 3], c: usize, v: [f64; 3]| {
        for i in 0..3 {
            u[i][c] = v[i];
        }
    };
    let tol = JACOBI_TOL * sigma[0].max(f64::MIN_POSITIVE);
    if sigma[0] <= f64::MIN_POSITIVE {
        // zero matrix: any orthonormal basis works
        *u = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        return;
    }
    if sigma[1] <= tol {
        // rank 1: pick a direction least aligned with u0
        let u0 = col(u, 0);
        let pick = if u0[0].abs() <= u0[1].abs() && u0[0].abs() <= u0[2].abs() {
            [1.0, 0.0, 0.0]
        } else if u0[1].abs() <= u0[2].abs() {
            [0.0, 1.0, 0.0]
        } else {
            [0.0, 0.0, 1.0]
        };
        let mut u1 = cross3(u0, pick);
        let n = norm3(u1);
        u1 = [u1[0] / n, u1[1] / n, u1[2] / n];
        set(u, 1, u1);
    }
    if sigma[2] <= tol || sigma[1] <= tol {
        let u2 = cross3(col(u, 0), col(u, 1));
        set(u, 2, u2);
    }
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn centroid(x: &Tensor) -> [f64; 3] {
    let n = x.shape()[0] as f64;
    let mut c = [0.0; 3];
    for i in 0..x.shape()[0] {
        for d in 0..3 {
            c[d] += x.at2(i, d);
        }
    }
    [c[0] / n, c[1] / n, c[2] / n]
}

/// Least-squares similarity transform aligning `x` onto `y`:
/// minimizes `|s * x * R + t - y|_F^2` over scale, proper rotation and
/// translation, via the SVD of the centered cross-covariance.
pub fn procrustes_align(x: &Tensor, y: &Tensor) -> Result<Similarity> {
    check_coords(x, "procrustes source")?;
    check_same_shape(x, y, "procrustes")?;
    let n = x.shape()[0];
    if n < 3 {
        return Err(Error::Range(format!(
            "procrustes alignment needs at least 3 points, got {n}"
        )));
    }
    let cx = centroid(x);
    let cy = centroid(y);
    // cross-covariance H = Xc^T Yc and source Gram Xc^T Xc
    let mut h = [[0.0; 3]; 3];
    let mut gram = [[0.0; 3]; 3];
    let mut x_sq = 0.0;
    for i in 0..n {
        let xi = [
            x.at2(i, 0) - cx[0],
            x.at2(i, 1) - cx[1],
            x.at2(i, 2) - cx[2],
        ];
        let yi = [
            y.at2(i, 0) - cy[0],
            y.at2(i, 1) - cy[1],
            y.at2(i, 2) - cy[2],
        ];
        for a in 0..3 {
            for b in 0..3 {
                h[a][b] += xi[a] * yi[b];
                gram[a][b] += xi[a] * xi[b];
            }
        }
        x_sq += dot3(xi, xi);
    }
    // degeneracy: all points collinear (or coincident) leaves the rotation
    // underdetermined around the line
    let (_, gram_sigma, _, _) = jacobi_svd3(gram);
    if gram_sigma[0] <= f64::MIN_POSITIVE || gram_sigma[1] <= 1e-12 * gram_sigma[0] {
        return Err(Error::Degenerate(
            "procrustes source points are collinear; the alignment is underdetermined".into(),
        ));
    }
    let (u, sigma, v, _) = jacobi_svd3(h);
    let d = if det3(&u) * det3(&v) < 0.0 { -1.0 } else { 1.0 };
    // R = U diag(1, 1, d) V^T
    let mut rot = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            rot[a][b] = u[a][0] * v[b][0] + u[a][1] * v[b][1] + d * u[a][2] * v[b][2];
        }
    }
    let scale = (sigma[0] + sigma[1] + d * sigma[2]) / x_sq;
    let translation = [
        cy[0] - scale * (cx[0] * rot[0][0] + cx[1] * rot[1][0] + cx[2] * rot[2][0]),
        cy[1] - scale * (cx[0] * rot[0][1] + cx[1] * rot[1][1] + cx[2] * rot[2][1]),
        cy[2] - scale * (cx[0] * rot[0][2] + cx[1] * rot[1][2] + cx[2] * rot[2][2]),
    ];
    let rotation = Tensor::new(&[3, 3], rot.iter().flatten().copied().collect())?;
    Ok(Similarity {
        scale,
        rotation,
        translation,
    })
}

/// Mean Euclidean joint distance after root-joint (index 0) translation
/// alignment.
pub fn mpjpe(predicted: &Tensor, target: &Tensor) -> Result<f64> {
    check_coords(predicted, "predicted joints")?;
    check_same_shape(predicted, target, "mpjpe")?;
    let n = predicted.shape()[0];
    let root_shift = [
        target.at2(0, 0) - predicted.at2(0, 0),
        target.at2(0, 1) - predicted.at2(0, 1),
        target.at2(0, 2) - predicted.at2(0, 2),
    ];
    let mut total = 0.0;
    for i in 0..n {
        let d = [
            predicted.at2(i, 0) + root_shift[0] - target.at2(i, 0),
            predicted.at2(i, 1) + root_shift[1] - target.at2(i, 1),
            predicted.at2(i, 2) + root_shift[2] - target.at2(i, 2),
        ];
        total += norm3(d);
    }
    Ok(total / n as f64)
}

/// Mean Euclidean joint distance after Procrustes alignment.
pub fn pa_mpjpe(predicted: &Tensor, target: &Tensor) -> Result<f64> {
    let sim = procrustes_align(predicted, target)?;
    let aligned = sim.apply(predicted)?;
    let n = aligned.shape()[0];
    let mut total = 0.0;
    for i in 0..n {
        let d = [
            aligned.at2(i, 0) - target.at2(i, 0),
            aligned.at2(i, 1) - target.at2(i, 1),
            aligned.at2(i, 2) - target.at2(i, 2),
        ];
        total += norm3(d);
    }
    Ok(total / n as f64)
}

/// Mean Euclidean vertex distance, no alignment.
pub fn mpvpe(predicted: &Tensor, target: &Tensor) -> Result<f64> {
    check_coords(predicted, "predicted mesh")?;
    check_same_shape(predicted, target, "mpvpe")?;
    let n = predicted.shape()[0];
    let mut total = 0.0;
    for i in 0..n {
        let d = [
            predicted.at2(i, 0) - target.at2(i, 0),
            predicted.at2(i, 1) - target.at2(i, 1),
            predicted.at2(i, 2) - target.at2(i, 2),
        ];
        total += norm3(d);
    }
    Ok(total / n as f64)
}

/// Mean acceleration error: second finite difference per frame (unit frame
/// spacing), Euclidean norm per joint, averaged over frames and joints.
pub fn accel_err(predicted: &Tensor, target: &Tensor) -> Result<f64> {
    for (t, what) in [(predicted, "predicted"), (target, "target")] {
        if t.rank() != 3 || t.shape()[2] != 3 {
            return Err(Error::Dimension(format!(
                "{what} sequence must be [t, j, 3], got {:?}",
                t.shape()
            )));
        }
    }
    check_same_shape(predicted, target, "accel_err")?;
    let (t, j) = (predicted.shape()[0], predicted.shape()[1]);
    if t < 3 {
        return Err(Error::Range(format!(
            "acceleration needs at least 3 frames, got {t}"
        )));
    }
    let accel = |x: &Tensor, tt: usize, jj: usize, d: usize| {
        x.at3(tt + 1, jj, d) - 2.0 * x.at3(tt, jj, d) + x.at3(tt - 1, jj, d)
    };
    let mut total = 0.0;
    for tt in 1..t - 1 {
        for jj in 0..j {
            let d = [
                accel(predicted, tt, jj, 0) - accel(target, tt, jj, 0),
                accel(predicted, tt, jj, 1) - accel(target, tt, jj, 1),
                accel(predicted, tt, jj, 2) - accel(target, tt, jj, 2),
            ];
            total += norm3(d);
        }
    }
    Ok(total / ((t - 2) * j) as f64)
}
