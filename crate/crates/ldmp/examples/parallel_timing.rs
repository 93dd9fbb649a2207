//! Fork-join execution of the dual-branch pass: the mesh branch runs on
//! the calling thread while the pose branch runs on a spawned thread.
//! Outputs are bitwise identical across modes; on a multi-core machine the
//! parallel mode is faster.
//!
//! ```bash
//! cargo run --release --example parallel_timing
//! ```

use ldmp::bench::run_timing;
use ldmp::engine::LdmpConfig;

fn main() -> ldmp::Result<()> {
    let cfg = LdmpConfig::default();
    let report = run_timing(&cfg, 5)?;
    println!("{} repeats on {} core(s):", report.repeats, report.cores);
    println!(
        "  sequential mean {:.2} ms (min {:.2} ms)",
        report.sequential.mean_ms, report.sequential.min_ms
    );
    println!(
        "  parallel   mean {:.2} ms (min {:.2} ms)",
        report.parallel.mean_ms, report.parallel.min_ms
    );
    println!("  speedup {:.3}", report.speedup);
    println!(
        "  outputs bitwise equal across modes: {}",
        report.bitwise_equal
    );
    if let Some(warning) = &report.warning {
        println!("  note: {warning}");
    }
    println!(
        "  published reference: {:.3} ms sequential, {:.3} ms parallel, speedup {:.2}",
        report.paper_reference.sequential_ms,
        report.paper_reference.parallel_ms,
        report.paper_reference.speedup
    );
    Ok(())
}
