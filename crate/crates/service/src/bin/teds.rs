use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use snaas_client::AuthoringClient;
use snaas_core::authoring::{
    create_template, generate_teds, parse_description, register_device, render_template,
};
use snaas_core::registry::RegistryClient;
use snaas_core::teds::decode_teds;
use snaas_service::{authoring_router, class_code, init_tracing, spawn_http};

/// Author TEDS for a TIM: templates, binary generation and registration.
#[derive(Parser)]
#[command(name = "teds", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the XML template of one TEDS class.
    Template {
        /// meta, channel, name, phy, or a two-digit hex class code
        #[arg(long)]
        class: String,
    },
    /// Encode a TIM description into one `.teds` file per class key.
    Generate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Store a TIM's TEDS in the directory, directly or through the
    /// authoring service.
    Register {
        #[arg(long = "in")]
        input: PathBuf,
        /// Directory server, host:port
        #[arg(long, required_unless_present = "service", conflicts_with = "service")]
        registry: Option<String>,
        /// Authoring service, host:port or URL
        #[arg(long)]
        service: Option<String>,
    },
    /// Decode a `.teds` file and print it as JSON.
    Inspect { file: PathBuf },
    /// Run the authoring HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: String,
        #[arg(long)]
        registry: String,
    },
}

fn read(path: &PathBuf) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

async fn run(cli: Cli) -> Result<(), String> {
    match cli.cmd {
        Cmd::Template { class } => {
            let code = class_code(&class).ok_or_else(|| format!("unknown class {class:?}"))?;
            let t = create_template(code).map_err(|e| e.to_string())?;
            print!("{}", render_template(&t));
        }
        Cmd::Generate { input, out_dir } => {
            let desc = parse_description(&read(&input)?).map_err(|e| e.to_string())?;
            let generated = generate_teds(&desc).map_err(|e| e.to_string())?;
            std::fs::create_dir_all(&out_dir).map_err(|e| format!("{}: {e}", out_dir.display()))?;
            for g in generated {
                let path = out_dir.join(format!("{}.teds", g.class_key.file_stem()));
                std::fs::write(&path, &g.binary).map_err(|e| format!("{}: {e}", path.display()))?;
                println!(
                    "{} {} octets {}",
                    g.class_key,
                    g.binary.len(),
                    path.display()
                );
            }
        }
        Cmd::Register {
            input,
            registry,
            service,
        } => {
            let text = read(&input)?;
            let receipt = match (registry, service) {
                (Some(addr), _) => {
                    let desc = parse_description(&text).map_err(|e| e.to_string())?;
                    register_device(&desc, &RegistryClient::new(addr))
                        .await
                        .map_err(|e| e.to_string())?
                }
                (None, Some(url)) => AuthoringClient::new(&url)
                    .register(&text)
                    .await
                    .map_err(|e| e.to_string())?,
                (None, None) => unreachable!("clap requires one of them"),
            };
            println!(
                "{}",
                serde_json::to_string_pretty(&receipt).expect("receipt serializes")
            );
        }
        Cmd::Inspect { file } => {
            let bytes = std::fs::read(&file).map_err(|e| format!("{}: {e}", file.display()))?;
            let record = decode_teds(&bytes).map_err(|e| e.to_string())?;
            println!(
                "{}",
                serde_json::to_string_pretty(&record).expect("record serializes")
            );
        }
        Cmd::Serve { listen, registry } => {
            let addr = spawn_http(&listen, authoring_router(RegistryClient::new(registry)))
                .await
                .map_err(|e| format!("{listen}: {e}"))?;
            println!("http {addr}");
            let _ = tokio::signal::ctrl_c().await;
        }
    }
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    init_tracing();
    match run(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("teds: {e}");
            ExitCode::FAILURE
        }
    }
}
