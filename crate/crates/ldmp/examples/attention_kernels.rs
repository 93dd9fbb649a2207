//! The four interaction kernels side by side: dense self/cross attention
//! and the pooled LSP/LCP replacements, with instrumented MAC counts
//! checked against the closed-form model.
//!
//! ```bash
//! cargo run --example attention_kernels
//! ```

use ldmp::attention::{cross_attention, lcp, lsp, self_attention, KernelWeights};
use ldmp::cost;
use ldmp::synthetic;
use ldmp::tensor::CountingContext;
use rand::SeedableRng;

fn main() -> ldmp::Result<()> {
    let (n_mesh, n_pose, c, r) = (431usize, 17usize, 64usize, 8usize);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let attn = KernelWeights::attention(c, false, &mut rng);
    let pooled = KernelWeights::lsp(c, false, false, &mut rng);
    let mesh_tokens = synthetic::features(n_mesh, c, 1).reshape(&[1, n_mesh, c])?;
    let pose_tokens = synthetic::features(n_pose, c, 2).reshape(&[1, n_pose, c])?;

    let report = |name: &str, macs: u64, analytical: u64| {
        assert_eq!(macs, analytical);
        println!("{name:<22} {macs:>12} MACs");
    };

    let mut ctx = CountingContext::new();
    self_attention(&mut ctx, &mesh_tokens, &attn)?;
    report(
        "vertex self-attention",
        ctx.macs(),
        cost::macs_self_attention(n_mesh, c)?,
    );

    let mut ctx = CountingContext::new();
    lsp(&mut ctx, &mesh_tokens, r, &pooled)?;
    report(
        "vertex LSP",
        ctx.macs(),
        cost::macs_lsp(n_mesh, c, r, false)?,
    );

    let mut ctx = CountingContext::new();
    cross_attention(&mut ctx, &mesh_tokens, &pose_tokens, &attn)?;
    report(
        "vertex cross-attention",
        ctx.macs(),
        cost::macs_cross_attention(n_mesh, n_pose, c)?,
    );

    let mut ctx = CountingContext::new();
    let out = lcp(&mut ctx, &mesh_tokens, &pose_tokens, r, &attn)?;
    report(
        "vertex LCP",
        ctx.macs(),
        cost::macs_lcp(n_mesh, n_pose, c, r)?,
    );
    println!("LCP output shape: {:?}", out.shape());

    let reduction = cost::reduction_pct(
        cost::macs_self_attention(n_mesh, c)?,
        cost::macs_lsp(n_mesh, c, r, false)?,
    );
    println!("LSP saves {reduction:.1}% of the self-attention MACs at this size");
    println!(
        "LCP keeps both token-token products, so against cross-attention it measures {:+.1}%",
        -cost::reduction_pct(
            cost::macs_cross_attention(n_mesh, n_pose, c)?,
            cost::macs_lcp(n_mesh, n_pose, c, r)?,
        )
    );
    Ok(())
}
