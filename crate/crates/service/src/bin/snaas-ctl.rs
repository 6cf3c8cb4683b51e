use std::process::ExitCode;

use clap::{Parser, Subcommand};
use snaas_client::{ControlClient, SampleStream};
use snaas_core::ident::parse_uuid_hex;
use snaas_core::ncap::{ChannelModel, ChannelUpdate};
use uuid::Uuid;

/// Operate a running NCAP through its control API.
#[derive(Parser)]
#[command(name = "snaas-ctl", version)]
struct Cli {
    /// Control API address
    #[arg(long, default_value = "127.0.0.1:7402")]
    ncap: String,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// List known TIMs.
    Devices,
    /// Show one TIM's TEDS and channel states.
    Device { uuid: String },
    /// Change a channel's settings.
    Channel {
        uuid: String,
        id: u8,
        #[arg(long, conflicts_with = "disable")]
        enable: bool,
        #[arg(long)]
        disable: bool,
        #[arg(long)]
        interval_us: Option<u32>,
        /// event_driven or sample_and_hold
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        deadband: Option<f64>,
    },
    /// Dump association latency records.
    Latency {
        #[arg(long)]
        csv: bool,
    },
    /// Drop every cached TEDS.
    FlushCache,
    /// Print sample events matching a topic pattern.
    Subscribe {
        /// Sample stream address
        #[arg(long, default_value = "127.0.0.1:7401")]
        data: String,
        pattern: String,
        /// Stop after this many events
        #[arg(long)]
        count: Option<usize>,
    },
}

fn uuid(s: &str) -> Result<Uuid, String> {
    parse_uuid_hex(s).ok_or_else(|| format!("bad uuid {s:?}"))
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("response serializes")
}

async fn run(cli: Cli) -> Result<(), String> {
    let client = ControlClient::new(&cli.ncap);
    let err = |e: snaas_client::ClientError| e.to_string();
    match cli.cmd {
        Cmd::Devices => println!("{}", pretty(&client.devices().await.map_err(err)?)),
        Cmd::Device { uuid: u } => {
            println!("{}", pretty(&client.device(uuid(&u)?).await.map_err(err)?))
        }
        Cmd::Channel {
            uuid: u,
            id,
            enable,
            disable,
            interval_us,
            model,
            deadband,
        } => {
            let model = match model.as_deref() {
                None => None,
                Some(m) => Some(
                    ChannelModel::parse(m).ok_or_else(|| format!("unknown channel model {m:?}"))?,
                ),
            };
            let update = ChannelUpdate {
                enabled: if enable {
                    Some(true)
                } else if disable {
                    Some(false)
                } else {
                    None
                },
                interval_us,
                model,
                deadband,
            };
            println!(
                "{}",
                pretty(
                    &client
                        .update_channel(uuid(&u)?, id, &update)
                        .await
                        .map_err(err)?
                )
            );
        }
        Cmd::Latency { csv: true } => print!("{}", client.latency_csv().await.map_err(err)?),
        Cmd::Latency { csv: false } => {
            println!("{}", pretty(&client.latency().await.map_err(err)?))
        }
        Cmd::FlushCache => println!("flushed {}", client.flush_cache().await.map_err(err)?),
        Cmd::Subscribe {
            data,
            pattern,
            count,
        } => {
            let mut stream = SampleStream::connect(&data, &pattern).await.map_err(err)?;
            let mut seen = 0;
            while count.is_none_or(|c| seen < c) {
                match stream.next().await.map_err(err)? {
                    Some(e) => println!("{}", e.to_line()),
                    None => break,
                }
                seen += 1;
            }
        }
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    match run(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("snaas-ctl: {e}");
            ExitCode::FAILURE
        }
    }
}
