use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use drillshare::commands::{self, ConfigSource};
use drillshare::live::{finish_label, LiveServer};
use drillshare::replay::{self, Replay};
use drillshare_core::config::Mode;
use drillshare_core::trace::read_trace;

#[derive(Parser)]
#[command(name = "drillshare", version, about = "Gaze-aware shared-control bone drilling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one session and write trace.ndjson and metrics.json.
    Run {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run all three modes on one seed, print the table and write compare.json.
    Compare {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Recompute the metrics document of a stored trace.
    Metrics {
        trace: PathBuf,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stream a stored trace over the telemetry websocket.
    Replay {
        trace: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Outbound tick_state rate in Hz.
        #[arg(long, default_value_t = 60.0)]
        rate: f64,
        #[command(flatten)]
        net: NetArgs,
    },
    /// Live session paced to the wall clock, steered over the telemetry websocket.
    Serve {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long)]
        mode: Option<Mode>,
        #[command(flatten)]
        net: NetArgs,
    },
}

#[derive(Args)]
struct SessionArgs {
    /// Session config (TOML). Unset keys take their defaults.
    #[arg(long, env = "DRILLSHARE_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct NetArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
}

impl NetArgs {
    fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.host, self.port)
    }
}

/// Configuration problems exit with 2, runtime failures with 1.
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn config(args: &SessionArgs, mode: Option<Mode>) -> Result<drillshare_core::SessionConfig, Failure> {
    ConfigSource { path: args.config.clone(), mode, seed: args.seed }.resolve().map_err(Failure::Usage)
}

fn announce(addr: SocketAddr) {
    println!("listening on http://{addr} (websocket at /ws)");
    let _ = std::io::stdout().flush();
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run { session, mode, out } => {
            let cfg = config(&session, mode)?;
            let summary = commands::run(cfg, &out)?;
            println!("{} after {} ticks", finish_label(&summary.finish), summary.records);
            println!("trace: {}", summary.trace.display());
            println!("smoothed series: {}", summary.smoothed.display());
            if let Some(m) = summary.metrics {
                println!("metrics: {}", m.display());
            }
            Ok(())
        }
        Command::Compare { session, out } => {
            let cfg = config(&session, None)?;
            let cmp = commands::compare(&cfg, Some(&out))?;
            print!("{}", cmp.table());
            Ok(())
        }
        Command::Metrics { trace, out } => {
            let doc = commands::metrics(&trace)?;
            match out {
                Some(p) => std::fs::write(&p, doc).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{doc}"),
            }
            Ok(())
        }
        Command::Replay { trace, speed, rate, net } => {
            let file = std::fs::File::open(&trace).with_context(|| format!("opening {}", trace.display()))?;
            let (header, records) =
                read_trace(std::io::BufReader::new(file)).with_context(|| format!("reading {}", trace.display()))?;
            let replay = Replay::new(header, &records, rate, speed).map_err(Failure::Usage)?;
            runtime()?.block_on(async {
                let (addr, handle) = replay::serve(replay, net.addr()).await?;
                announce(addr);
                tokio::select! {
                    r = handle => { r.context("replay server task")??; }
                    _ = tokio::signal::ctrl_c() => {}
                }
                Ok::<_, anyhow::Error>(())
            })?;
            Ok(())
        }
        Command::Serve { session, mode, net } => {
            let cfg = config(&session, mode)?;
            runtime()?.block_on(async {
                let server = LiveServer::start(cfg, net.addr()).await?;
                announce(server.addr);
                tokio::signal::ctrl_c().await?;
                tracing::info!("shutting down");
                server.shutdown().await
            })?;
            Ok(())
        }
    }
}

fn runtime() -> anyhow::Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}
