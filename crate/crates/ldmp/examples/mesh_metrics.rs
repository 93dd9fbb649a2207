//! Losses and evaluation metrics: Procrustes alignment recovering a known
//! similarity transform, translation-invariant MPJPE, and the weighted
//! training loss on a toy mesh.
//!
//! ```bash
//! cargo run --example mesh_metrics
//! ```

use ldmp::metrics::{
    loss_edge, loss_joint, loss_mesh, loss_normal, mpjpe, mpvpe, pa_mpjpe, procrustes_align,
    total_loss, LossParts, LossWeights,
};
use ldmp::synthetic;
use ldmp::tensor::{matmul, CountingContext, Tensor};

fn main() -> ldmp::Result<()> {
    // recover a synthesized similarity transform
    let gt = synthetic::features(10, 3, 21);
    let theta: f64 = 0.6;
    let (s, c) = theta.sin_cos();
    let rot = Tensor::new(&[3, 3], vec![c, s, 0.0, -s, c, 0.0, 0.0, 0.0, 1.0])?;
    let mut free = CountingContext::disabled();
    let mut pred = matmul(&mut free, &gt.scale(1.4), &rot)?;
    for (i, v) in pred.data_mut().iter_mut().enumerate() {
        *v += [0.2, -0.1, 0.5][i % 3];
    }
    let sim = procrustes_align(&gt, &pred)?;
    println!(
        "recovered scale {:.6} (true 1.4), |t - t0| = {:.2e}",
        sim.scale,
        ((sim.translation[0] - 0.2).powi(2)
            + (sim.translation[1] + 0.1).powi(2)
            + (sim.translation[2] - 0.5).powi(2))
        .sqrt()
    );
    println!(
        "mpjpe(pred, gt)    = {:.4} (transform left in place)",
        mpjpe(&pred, &gt)?
    );
    println!(
        "pa-mpjpe(pred, gt) = {:.2e} (similarity removed)",
        pa_mpjpe(&pred, &gt)?
    );

    // losses on a jittered toy mesh (random points give non-degenerate
    // faces)
    let mesh = synthetic::mesh_state(12, 30, 4)?;
    let fine_gt = synthetic::features(30, 3, 55).scale(0.5);
    let jitter = synthetic::features(30, 3, 99).scale(0.01);
    let fine_pred = fine_gt.add(&jitter)?;
    let parts = LossParts {
        mesh: loss_mesh(&fine_pred, &fine_gt)?,
        joint: loss_joint(&fine_pred.batch_like_joints(), &fine_gt.batch_like_joints())?,
        normal: loss_normal(&fine_pred, &mesh.faces, &fine_gt)?,
        edge: loss_edge(&fine_pred, &mesh.faces, &fine_gt)?,
    };
    let weights = LossWeights::default();
    println!(
        "losses: mesh {:.5}, joint {:.5}, normal {:.5}, edge {:.5} -> total {:.5}",
        parts.mesh,
        parts.joint,
        parts.normal,
        parts.edge,
        total_loss(&parts, &weights)
    );
    println!("mpvpe(pred, gt) = {:.5}", mpvpe(&fine_pred, &fine_gt)?);
    Ok(())
}

// tiny convenience for the demo: treat the first rows as "joints"
trait JointView {
    fn batch_like_joints(&self) -> Tensor;
}

impl JointView for Tensor {
    fn batch_like_joints(&self) -> Tensor {
        let rows = 5.min(self.shape()[0]);
        Tensor::new(&[rows, 3], self.data()[..rows * 3].to_vec()).unwrap()
    }
}
