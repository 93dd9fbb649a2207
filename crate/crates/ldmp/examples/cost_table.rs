//! The full MAC/parameter comparison table at paper-scale dimensions,
//! including the published reference rows and the block-level comparison.
//!
//! ```bash
//! cargo run --release --example cost_table
//! ```

use ldmp::bench::build_cost_table;
use ldmp::cost::block_comparison;
use ldmp::engine::LdmpConfig;

fn main() -> ldmp::Result<()> {
    let cfg = LdmpConfig::default(); // N_v=431, J=17, C=512, r=64
    let table = build_cost_table(&cfg)?;
    print!("{}", table.to_csv());

    println!("\nr sweep (vertex tokens):");
    for row in &table.r_sweep {
        println!(
            "  r={:<4} lsp {:>12} MACs   lcp {:>12} MACs",
            row.r, row.lsp_macs, row.lcp_macs
        );
    }

    let blocks = block_comparison(&cfg)?;
    println!("\nblock-level comparison:");
    for entry in &blocks.entries {
        println!(
            "  {:<24} {:>14} MACs {:>12} params",
            entry.name, entry.macs, entry.params
        );
    }
    for cmp in &blocks.comparisons {
        println!(
            "  {} vs {}: {:.1}% fewer MACs",
            cmp.variant, cmp.baseline, cmp.mac_reduction_pct
        );
    }
    Ok(())
}
