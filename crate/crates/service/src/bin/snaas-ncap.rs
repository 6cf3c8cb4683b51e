use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use snaas_core::ncap::{Ncap, NcapConfig};
use snaas_service::{control_router, init_tracing, spawn_http};

/// The gateway: discovers TIMs, resolves their TEDS, configures them and
/// streams their samples.
#[derive(Parser)]
#[command(name = "snaas-ncap", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    Serve {
        /// UDP endpoint for association packets
        #[arg(long, default_value = "127.0.0.1:7400")]
        assoc_listen: String,
        /// TCP endpoint for sample subscribers
        #[arg(long, default_value = "127.0.0.1:7401")]
        data_listen: String,
        /// HTTP control API
        #[arg(long, default_value = "127.0.0.1:7402")]
        control_listen: String,
        #[arg(long)]
        registry: String,
        #[arg(long)]
        cache_dir: Option<PathBuf>,
        /// Keep at most this many TIMs cached (least recently used go first)
        #[arg(long)]
        cache_max: Option<usize>,
    },
}

#[tokio::main]
async fn main() -> ExitCode {
    init_tracing();
    let Cmd::Serve {
        assoc_listen,
        data_listen,
        control_listen,
        registry,
        cache_dir,
        cache_max,
    } = Cli::parse().cmd;
    let mut config = NcapConfig::new(registry);
    config.assoc_listen = assoc_listen;
    config.data_listen = data_listen;
    config.cache_dir = cache_dir;
    config.cache_max = cache_max;
    let handle = match Ncap::start(config).await {
        Ok(h) => h,
        Err(e) => {
            eprintln!("snaas-ncap: {e}");
            return ExitCode::FAILURE;
        }
    };
    let control = match spawn_http(&control_listen, control_router(handle.ncap.clone())).await {
        Ok(a) => a,
        Err(e) => {
            eprintln!("snaas-ncap: {control_listen}: {e}");
            return ExitCode::FAILURE;
        }
    };
    println!("assoc {}", handle.assoc_addr);
    println!("data {}", handle.data_addr);
    println!("control {control}");
    let _ = tokio::signal::ctrl_c().await;
    handle.shutdown();
    ExitCode::SUCCESS
}
