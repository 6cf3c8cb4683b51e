use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use snaas_core::ident::{parse_uuid_hex, uuid_hex};
use snaas_core::sim::{run_fleet, scenario_from_file, SimChannel, SimTimConfig};
use snaas_service::init_tracing;
use uuid::Uuid;

/// Simulated TIMs.
#[derive(Parser)]
#[command(name = "snaas-tim", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one TIM.
    Run {
        /// 32 hex digits, or "random"
        #[arg(long, default_value = "random")]
        uuid: String,
        #[arg(long, default_value_t = 100)]
        interval_ms: u64,
        /// Channel specs such as 0:sine:amplitude=2,period_us=100000
        #[arg(long, num_args = 1.., required = true)]
        channels: Vec<String>,
        /// NCAP association endpoint
        #[arg(long)]
        ncap: String,
        /// Keep sending association packets after being configured
        #[arg(long)]
        keep_broadcasting: bool,
        #[arg(long, default_value_t = 1000)]
        rebroadcast_after_ms: u64,
    },
    /// Run every TIM of a scenario file.
    Fleet {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        ncap: String,
    },
}

fn configs(cmd: Cmd) -> Result<(Vec<SimTimConfig>, String), String> {
    match cmd {
        Cmd::Run {
            uuid,
            interval_ms,
            channels,
            ncap,
            keep_broadcasting,
            rebroadcast_after_ms,
        } => {
            let uuid = if uuid == "random" {
                Uuid::new_v4()
            } else {
                parse_uuid_hex(&uuid).ok_or_else(|| format!("bad uuid {uuid:?}"))?
            };
            let channels = channels
                .iter()
                .map(|c| c.parse::<SimChannel>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| e.to_string())?;
            let mut cfg = SimTimConfig::new(uuid, channels);
            cfg.association_interval_ms = interval_ms;
            cfg.stop_on_config = !keep_broadcasting;
            cfg.rebroadcast_after_ms = rebroadcast_after_ms;
            Ok((vec![cfg], ncap))
        }
        Cmd::Fleet { scenario, ncap } => Ok((
            scenario_from_file(&scenario).map_err(|e| e.to_string())?,
            ncap,
        )),
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    init_tracing();
    let (configs, ncap) = match configs(Cli::parse().cmd) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("snaas-tim: {e}");
            return ExitCode::FAILURE;
        }
    };
    let fleet = match run_fleet(configs, &ncap).await {
        Ok(f) => f,
        Err(e) => {
            eprintln!("snaas-tim: {e}");
            return ExitCode::FAILURE;
        }
    };
    for tim in &fleet {
        println!("tim {} {}", uuid_hex(&tim.uuid), tim.local_addr);
    }
    let _ = tokio::signal::ctrl_c().await;
    drop(fleet);
    ExitCode::SUCCESS
}
