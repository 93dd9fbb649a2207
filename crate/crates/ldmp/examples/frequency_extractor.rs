//! Stage-1 feature extraction: channel-axis wavelet split, temporal
//! attention over the low half, depthwise convolution over the high half,
//! inverse-wavelet merge and GRU encoding.
//!
//! ```bash
//! cargo run --example frequency_extractor
//! ```

use ldmp::cost;
use ldmp::engine::LdmpConfig;
use ldmp::lifd::{self, FeatureSequence, LifdWeights};
use ldmp::synthetic;
use ldmp::tensor::CountingContext;
use rand::SeedableRng;

fn main() -> ldmp::Result<()> {
    // paper-scale stage 1: 16 frames x 2048 channels, 2048-wide encoder
    let cfg = LdmpConfig::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let weights = LifdWeights::seeded(&mut rng, cfg.c_img, cfg.c_hidden, cfg.conv_kernel_len);
    let features = FeatureSequence::new(synthetic::features(cfg.t, cfg.c_img, cfg.seed))?;

    let mut ctx = CountingContext::new();
    let hybrid = lifd::run_lifd(&mut ctx, &features, &weights)?;
    println!(
        "features {:?} -> per-frame {:?}, temporal {:?}",
        features.frames().shape(),
        hybrid.per_frame.shape(),
        hybrid.temporal.shape()
    );
    println!(
        "instrumented MACs {} (analytical {})",
        ctx.macs(),
        cost::macs_run_lifd(&cfg)?
    );

    // the merge step is linear: each branch contributes independently
    let pair = lifd::decompose(&features)?;
    let mut free = CountingContext::disabled();
    let global = lifd::low_branch_attention(&mut free, &pair.low, &weights)?;
    let local = lifd::high_branch_conv(&mut free, &pair.high, &weights)?;
    let zeros = ldmp::Tensor::zeros(global.shape())?;
    let both = lifd::merge(&global, &local)?;
    let split_sum = lifd::merge(&global, &zeros)?.add(&lifd::merge(&zeros, &local)?)?;
    println!(
        "branch superposition defect: {:.3e}",
        both.max_abs_diff(&split_sum)?
    );
    Ok(())
}
