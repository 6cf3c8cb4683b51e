use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use snaas_core::bench::{run_with, BenchOptions};
use snaas_service::init_tracing;

/// Measure NCAP association latency with TEDS cached (case A) and fetched
/// from the directory (case B).
#[derive(Parser)]
#[command(name = "snaas-bench", version)]
struct Cli {
    #[arg(long, default_value_t = 50)]
    iterations: usize,
    /// Delay the directory adds to each query
    #[arg(long, default_value_t = 0)]
    inject_delay_us: u64,
    /// Association cadence of the simulated TIMs
    #[arg(long, default_value_t = 100)]
    interval_ms: u64,
    /// Markdown report; printed to stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> ExitCode {
    init_tracing();
    let cli = Cli::parse();
    let mut opts = BenchOptions::new(cli.iterations, cli.inject_delay_us);
    opts.association_interval_ms = cli.interval_ms;
    let report = match run_with(&opts).await {
        Ok(r) => r,
        Err(e) => {
            eprintln!("snaas-bench: {e}");
            return ExitCode::FAILURE;
        }
    };
    let md = report.to_markdown();
    let written = (|| {
        match &cli.out {
            Some(p) => std::fs::write(p, &md).map_err(|e| format!("{}: {e}", p.display()))?,
            None => print!("{md}"),
        }
        if let Some(p) = &cli.csv {
            std::fs::write(p, report.to_csv()).map_err(|e| format!("{}: {e}", p.display()))?;
        }
        Ok::<_, String>(())
    })();
    if let Err(e) = written {
        eprintln!("snaas-bench: {e}");
        return ExitCode::FAILURE;
    }
    if !report.cache_once.pass {
        eprintln!(
            "snaas-bench: cache-once check failed: {:?}",
            report.cache_once.served
        );
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
