//! Full forward pass at paper scale: synthetic features and poses through
//! the frequency-domain extractor, the dual-branch interaction engine and
//! coarse-to-fine upsampling, with the per-stage MAC tally.
//!
//! ```bash
//! cargo run --release --example end_to_end
//! ```

use ldmp::bench::{run_forward, write_outputs, RunManifest};
use std::path::Path;

fn main() -> ldmp::Result<()> {
    let manifest = RunManifest::default(); // synthetic inputs, seed 7
    let outputs = run_forward(&manifest, Path::new("."))?;
    println!(
        "intermediate mesh {:?}, detailed mesh {:?}, refined pose {:?}",
        outputs.m_i.shape(),
        outputs.m_f.shape(),
        outputs.p_out.shape()
    );
    println!(
        "MACs: stage-1 {}, stage-2 {}, upsample {}, total {}",
        outputs.macs.lifd, outputs.macs.ldmp, outputs.macs.upsample, outputs.macs.total
    );

    let out_dir = std::env::temp_dir().join("ldmp-end-to-end");
    let paths = write_outputs(&out_dir, &outputs, &manifest)?;
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}
