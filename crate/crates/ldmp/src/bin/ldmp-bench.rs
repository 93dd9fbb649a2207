//! Command-line front door: `verify`, `cost`, `timing` and `run` over a
//! JSON manifest (or seeded synthetic defaults).
//!
//! Exit codes: 0 success, 1 check failure, 2 usage/config error, 3 I/O
//! error.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use ldmp::bench::{self, FaultInjection, RunManifest};
use ldmp::engine::ExecMode;
use ldmp::error::{Error, Result};

#[derive(Parser)]
#[command(
    name = "ldmp-bench",
    version,
    about = "Verification, cost-model, timing and forward-run harness for the \
             low-dimensional mesh-pose interaction kernels"
)]
struct Cli {
    /// JSON run manifest. Defaults to a synthetic paper-scale setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the manifest seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for reports and output tensors.
    #[arg(long, global = true, default_value = "ldmp-out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    /// Negate the detail coefficients inside the wavelet roundtrip check.
    DwtSign,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sequential,
    Parallel,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the oracle/invariant checks and write verify_report.json.
    Verify {
        /// Deliberately corrupt one check to prove the suite catches it.
        #[arg(long, value_enum)]
        inject_fault: Option<FaultArg>,
    },
    /// Emit the MAC/parameter table as cost_table.csv + cost_table.json.
    Cost,
    /// Time the dual-branch pass in both execution modes.
    Timing {
        /// Paired sequential/parallel repetitions.
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Full forward pass; writes mesh/pose tensors and run_report.json.
    Run {
        /// Override the execution mode of the dual-branch pass.
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Generate seeded synthetic inputs regardless of manifest paths.
        #[arg(long)]
        synthetic: bool,
    },
}

fn load_manifest(cli: &Cli) -> Result<(RunManifest, PathBuf)> {
    let (mut manifest, base) = match &cli.config {
        Some(path) => {
            let manifest = RunManifest::load(path)?;
            let base = path
                .parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(Path::new("."))
                .to_path_buf();
            (manifest, base)
        }
        None => (RunManifest::default(), PathBuf::from(".")),
    };
    if let Some(seed) = cli.seed {
        manifest.config.seed = seed;
    }
    Ok((manifest, base))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))
        .map_err(|e| Error::io(path, e))?;
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_verify(cli: &Cli, inject: Option<FaultArg>) -> Result<i32> {
    let (manifest, base) = load_manifest(cli)?;
    // Fail fast on unreadable or inconsistent inputs before any checks.
    manifest.resolve(&base)?;
    let fault = inject.map(|f| match f {
        FaultArg::DwtSign => FaultInjection::DwtSign,
    });
    let report = bench::run_verify(&manifest.config, fault)?;
    for check in &report.checks {
        println!(
            "check {}: {} (deviation {:.3e}, threshold {:.3e})",
            check.name,
            if check.passed { "pass" } else { "FAIL" },
            check.deviation,
            check.threshold
        );
    }
    write_json(&cli.out.join("verify_report.json"), &report)?;
    println!(
        "verify: {} -> {}",
        if report.passed {
            "all checks passed"
        } else {
            "checks FAILED"
        },
        cli.out.join("verify_report.json").display()
    );
    Ok(if report.passed { 0 } else { 1 })
}

fn cmd_cost(cli: &Cli) -> Result<i32> {
    let (manifest, _) = load_manifest(cli)?;
    let table = bench::build_cost_table(&manifest.config)?;
    let csv_path = cli.out.join("cost_table.csv");
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    std::fs::write(&csv_path, table.to_csv()).map_err(|e| Error::io(&csv_path, e))?;
    write_json(&cli.out.join("cost_table.json"), &table)?;
    print!("{}", table.to_csv());
    println!(
        "cost: wrote {} and {}",
        csv_path.display(),
        cli.out.join("cost_table.json").display()
    );
    Ok(0)
}

fn cmd_timing(cli: &Cli, repeats: Option<usize>) -> Result<i32> {
    let (manifest, _) = load_manifest(cli)?;
    let repeats = repeats.unwrap_or(manifest.repeats);
    let report = bench::run_timing(&manifest.config, repeats)?;
    println!(
        "timing over {} repeats on {} core(s): sequential {:.3} ms, parallel {:.3} ms, \
         speedup {:.3} (reference: {:.3} ms / {:.3} ms, {:.2})",
        report.repeats,
        report.cores,
        report.sequential.mean_ms,
        report.parallel.mean_ms,
        report.speedup,
        report.paper_reference.sequential_ms,
        report.paper_reference.parallel_ms,
        report.paper_reference.speedup,
    );
    if let Some(warning) = &report.warning {
        println!("warning: {warning}");
    }
    write_json(&cli.out.join("timing_report.json"), &report)?;
    if !report.bitwise_equal {
        eprintln!("error: parallel and sequential outputs differ bitwise");
        return Ok(1);
    }
    Ok(0)
}

fn cmd_run(cli: &Cli, mode: Option<ModeArg>, synthetic: bool) -> Result<i32> {
    let (mut manifest, base) = load_manifest(cli)?;
    if synthetic {
        manifest.synthetic = true;
    }
    if let Some(mode) = mode {
        manifest.config.exec_mode = match mode {
            ModeArg::Sequential => ExecMode::Sequential,
            ModeArg::Parallel => ExecMode::Parallel,
        };
    }
    let out_dir = manifest.out_dir.clone().unwrap_or_else(|| cli.out.clone());
    let outputs = bench::run_forward(&manifest, &base)?;
    let paths = bench::write_outputs(&out_dir, &outputs, &manifest)?;
    println!(
        "run: {} MACs total (stage1 {}, stage2 {}, upsample {})",
        outputs.macs.total, outputs.macs.lifd, outputs.macs.ldmp, outputs.macs.upsample
    );
    if let Some(metrics) = &outputs.metrics {
        println!(
            "metrics: mpjpe {:.6}, pa-mpjpe {:.6}, mpvpe {:.6}{}",
            metrics.mpjpe,
            metrics.pa_mpjpe,
            metrics.mpvpe,
            metrics
                .accel_err
                .map(|a| format!(", accel-err {a:.6}"))
                .unwrap_or_default()
        );
    }
    for path in paths {
        println!("wrote {}", path.display());
    }
    Ok(0)
}

fn execute(cli: &Cli) -> Result<i32> {
    match &cli.cmd {
        Cmd::Verify { inject_fault } => cmd_verify(cli, *inject_fault),
        Cmd::Cost => cmd_cost(cli),
        Cmd::Timing { repeats } => cmd_timing(cli, *repeats),
        Cmd::Run { mode, synthetic } => cmd_run(cli, *mode, *synthetic),
    }
}

fn main() {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            std::process::exit(e.exit_code());
        }
    }
}
