//! Haar analysis/synthesis on a feature matrix: energy split between the
//! frequency halves and exact reconstruction.
//!
//! ```bash
//! cargo run --example wavelet_roundtrip
//! ```

use ldmp::synthetic;
use ldmp::tensor::Axis;
use ldmp::wavelet::{dwt_haar, idwt_haar};

fn main() -> ldmp::Result<()> {
    let x = synthetic::features(16, 2048, 7);
    let pair = dwt_haar(&x, Axis::Cols)?;
    println!(
        "input {:?} -> low {:?} + high {:?}",
        x.shape(),
        pair.low.shape(),
        pair.high.shape()
    );
    let (e, el, eh) = (x.norm_sq(), pair.low.norm_sq(), pair.high.norm_sq());
    println!(
        "energy {e:.3} = low {el:.3} + high {eh:.3} (defect {:.3e})",
        (e - el - eh).abs()
    );

    let back = idwt_haar(&pair)?;
    println!("max |idwt(dwt(x)) - x| = {:.3e}", x.max_abs_diff(&back)?);

    // odd extents are rejected rather than silently padded
    let odd = ldmp::Tensor::new(&[5], vec![1.0, 2.0, 3.0, 4.0, 5.0])?;
    match dwt_haar(&odd, Axis::Cols) {
        Err(e) => println!("odd-length input: {e}"),
        Ok(_) => unreachable!("odd extents must be rejected"),
    }
    Ok(())
}
