use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use telearm_core::config::ExperimentConfig;
use telearm_core::experiments::{reproduce_table1, reproduce_table2, run_experiment, ExperimentKind, RunRequest};
use telearm_core::plant::AxisName;
use telearm_core::simkit::{LatencyConfig, SignalKind};
use telearm_teleop::{ServeOptions, Transport};

const EXIT_CONFIG: u8 = 2;
const EXIT_VIOLATION: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "telearm",
    version,
    about = "Lead-screw arm control simulator and teleoperation service"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment on one axis and write its trace and metrics.
    Run(RunArgs),
    /// Run the canned experiments behind a results table and compare.
    Reproduce(ReproduceArgs),
    /// Serve the live arm on a web socket (or raw TCP with --raw).
    Serve(ServeArgs),
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    /// Config file; the bundled defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    experiment: ExperimentKind,
    #[arg(long)]
    axis: AxisName,
    /// Step height or wave amplitude (m).
    #[arg(long)]
    amplitude: Option<f64>,
    /// Wave frequency (Hz).
    #[arg(long)]
    freq: Option<f64>,
    /// Run length (s).
    #[arg(long)]
    duration: Option<f64>,
    /// Endurance waveform: sine or tri.
    #[arg(long)]
    waveform: Option<SignalKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    latency_base_ms: Option<f64>,
    #[arg(long)]
    latency_jitter_ms: Option<f64>,
    /// Trace CSV output.
    #[arg(long)]
    out: PathBuf,
    /// Metrics output.
    #[arg(long)]
    metrics: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Table {
    Table1,
    Table2,
}

#[derive(Debug, clap::Args)]
struct ReproduceArgs {
    table: Table,
    #[arg(long)]
    axis: Option<AxisName>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    latency_base_ms: Option<f64>,
    #[arg(long)]
    latency_jitter_ms: Option<f64>,
    /// Speak newline-delimited JSON over bare TCP instead of a web socket.
    #[arg(long)]
    raw: bool,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, ExitCode> {
    let res = match path {
        Some(p) => ExperimentConfig::load(p).map_err(|e| (p.display().to_string(), e)),
        None => Ok(ExperimentConfig::default_config()),
    };
    res.map_err(|(p, e)| {
        eprintln!("error: config {p}: {e}");
        ExitCode::from(EXIT_CONFIG)
    })
}

fn apply_latency(cfg: &mut ExperimentConfig, base: Option<f64>, jitter: Option<f64>) -> Result<(), ExitCode> {
    if let Some(b) = base {
        cfg.latency.base_ms = b;
    }
    if let Some(j) = jitter {
        cfg.latency.jitter_ms = j;
    }
    cfg.validate().map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_CONFIG)
    })
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|()| w.flush())
        .with_context(|| format!("cannot write {}", path.display()))
}

fn run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = match load_config(args.config.as_deref()) {
        Ok(c) => c,
        Err(code) => return Ok(code),
    };
    if let Some(seed) = args.seed {
        cfg.sim.seed = seed;
    }
    if let Err(code) = apply_latency(&mut cfg, args.latency_base_ms, args.latency_jitter_ms) {
        return Ok(code);
    }
    let req = RunRequest {
        amplitude: args.amplitude,
        freq: args.freq,
        duration: args.duration,
        waveform: args.waveform,
        ..RunRequest::new(args.experiment, args.axis)
    };
    let report = match run_experiment(&cfg, &req) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(EXIT_CONFIG));
        }
    };
    write_file(&args.out, |w| report.trace.write_csv(w))?;
    write_file(&args.metrics, |w| report.write_metrics(&cfg, w))?;
    let violations = report.violations();
    for v in &violations {
        eprintln!("violation: {v}");
    }
    Ok(if violations.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VIOLATION)
    })
}

fn reproduce(args: ReproduceArgs) -> anyhow::Result<ExitCode> {
    let cfg = match load_config(args.config.as_deref()) {
        Ok(c) => c,
        Err(code) => return Ok(code),
    };
    let report = match args.table {
        Table::Table1 => reproduce_table1(&cfg, args.axis),
        Table::Table2 => reproduce_table2(&cfg, args.axis),
    };
    match report {
        Ok(r) => {
            print!("{}", r.render());
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            eprintln!("error: {e}");
            Ok(ExitCode::from(EXIT_CONFIG))
        }
    }
}

async fn serve(args: ServeArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = match load_config(args.config.as_deref()) {
        Ok(c) => c,
        Err(code) => return Ok(code),
    };
    if let Err(code) = apply_latency(&mut cfg, args.latency_base_ms, args.latency_jitter_ms) {
        return Ok(code);
    }
    let opts = ServeOptions {
        bind: args.bind,
        transport: if args.raw { Transport::Raw } else { Transport::WebSocket },
        latency: LatencyConfig {
            base_ms: cfg.latency.base_ms,
            jitter_ms: cfg.latency.jitter_ms,
        },
    };
    let handle = telearm_teleop::spawn(&cfg, opts).await?;
    let path = if args.raw { "" } else { "/teleop" };
    let scheme = if args.raw { "tcp" } else { "ws" };
    println!("listening on {scheme}://{}{path}", handle.local_addr);
    tokio::signal::ctrl_c().await?;
    handle.shutdown().await?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Reproduce(a) => reproduce(a),
        Command::Serve(a) => tokio::runtime::Runtime::new()
            .context("cannot start runtime")
            .and_then(|rt| rt.block_on(serve(a))),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
