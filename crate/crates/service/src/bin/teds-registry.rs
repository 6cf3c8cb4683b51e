use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};
use snaas_core::registry::{spawn, Directory, ServerOptions};
use snaas_service::init_tracing;

/// The TEDS directory: binary TEDS keyed by TIM uuid and class key.
#[derive(Parser)]
#[command(name = "teds-registry", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    Serve {
        #[arg(long, default_value = "127.0.0.1:7301")]
        listen: String,
        /// Append-only log file; memory only when omitted
        #[arg(long)]
        data: Option<PathBuf>,
        /// Delay added before answering each GET and LIST
        #[arg(long, default_value_t = 0)]
        inject_delay_us: u64,
    },
}

#[tokio::main]
async fn main() -> ExitCode {
    init_tracing();
    let Cmd::Serve {
        listen,
        data,
        inject_delay_us,
    } = Cli::parse().cmd;
    let directory = match &data {
        Some(path) => match Directory::open(path) {
            Ok(d) => d,
            Err(e) => {
                eprintln!("teds-registry: {}: {e}", path.display());
                return ExitCode::FAILURE;
            }
        },
        None => Directory::in_memory(),
    };
    let options = ServerOptions {
        inject_delay: Duration::from_micros(inject_delay_us),
    };
    let handle = match spawn(listen.as_str(), Arc::new(directory), options).await {
        Ok(h) => h,
        Err(e) => {
            eprintln!("teds-registry: {listen}: {e}");
            return ExitCode::FAILURE;
        }
    };
    println!("registry {}", handle.local_addr);
    let _ = tokio::signal::ctrl_c().await;
    handle.shutdown().await;
    ExitCode::SUCCESS
}
