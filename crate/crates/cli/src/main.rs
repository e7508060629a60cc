use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sdla::experiments::{run_and_write, LabError, RunConfig};

#[derive(Parser)]
#[command(name = "sdla", version, about = "Stationary DLA simulation lab")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Flat TOML config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    replicas: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    out_dir: Option<String>,
    /// Config override `key=value`, repeatable; applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Harmonic measure of an aggregate (exact solve and/or Monte-Carlo).
    Harmonic,
    /// Interface radius tail and box-escape frequencies.
    InterfaceTail,
    /// Thinned and Gillespie DLA from a floor segment.
    Dla,
    /// Coupled pairs at n and n+1: discrepancy tails and rate envelope.
    Couple,
    /// Window disagreement and field stabilization across n.
    Locality,
    /// Shift and reflection invariance of occupation probabilities.
    Stationarity,
    /// Correlation decay and local-cluster independence.
    Mixing,
}

impl Cmd {
    fn name(self) -> &'static str {
        match self {
            Cmd::Harmonic => "harmonic",
            Cmd::InterfaceTail => "interface-tail",
            Cmd::Dla => "dla",
            Cmd::Couple => "couple",
            Cmd::Locality => "locality",
            Cmd::Stationarity => "stationarity",
            Cmd::Mixing => "mixing",
        }
    }
}

fn load_config(c: &Common) -> Result<RunConfig, LabError> {
    let text = match &c.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| LabError::Config(format!("{}: {e}", p.display())))?),
        None => None,
    };
    let mut overrides = Vec::new();
    if let Some(s) = c.seed {
        overrides.push(format!("seed={s}"));
    }
    if let Some(r) = c.replicas {
        overrides.push(format!("replicas={r}"));
    }
    if let Some(w) = c.workers {
        overrides.push(format!("workers={w}"));
    }
    if let Some(o) = &c.out_dir {
        overrides.push(format!("out_dir={o:?}"));
    }
    overrides.extend(c.set.iter().cloned());
    RunConfig::load(text.as_deref(), &overrides)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load_config(&cli.common).and_then(|cfg| run_and_write(cli.command.name(), &cfg));
    match result {
        Ok((report, record)) => {
            for (name, v) in &report.verdicts {
                println!("{name}: {}", v.as_str());
            }
            for o in &record.outputs {
                println!("wrote {}/{}", record.config.out_dir, o.file);
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
