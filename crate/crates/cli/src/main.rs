use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use tracing_subscriber::EnvFilter;

use relaxnav_cli::commands::{self, *};
use relaxnav_cli::service;

#[derive(Debug, Parser)]
#[command(name = "relaxnav", version, about = "Soft-constraint relaxation planning pipeline")]
struct Cli {
    /// Log verbosity: -v info, -vv debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Generate a synthetic city map.
    GenMap(GenMapArgs),
    /// Generate maps, blocked scenarios and expert demonstrations.
    Dataset(DatasetArgs),
    /// Sample start/goal scenarios on a map.
    Scenarios(ScenariosArgs),
    /// Segment a map into superpixels and build its region graph.
    Segment(SegmentArgs),
    /// Relabel superpixels around seed points.
    Perturb(PerturbArgs),
    /// Generate expert demonstrations for scenarios.
    Oracle(OracleArgs),
    /// Train the relaxation cost model.
    Train(TrainArgs),
    /// Plan once and render an overlay.
    Plan(PlanArgs),
    /// Run an interleaved plan/execute episode.
    Simulate(SimulateArgs),
    /// Benchmark planners over scenarios.
    Bench(BenchArgs),
    /// Serve the /v1 HTTP API over a data directory.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
    },
}

fn run(cmd: &Command) -> Result<Value> {
    tracing::info!(config = %serde_json::to_string(cmd)?, "resolved config");
    match cmd {
        Command::GenMap(a) => commands::gen_map(a),
        Command::Dataset(a) => commands::dataset(a),
        Command::Scenarios(a) => commands::scenarios(a),
        Command::Segment(a) => commands::segment(a),
        Command::Perturb(a) => commands::perturb(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Train(a) => commands::train(a),
        Command::Plan(a) => commands::plan(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Bench(a) => commands::bench(a),
        Command::Serve { port, data_dir } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(*port, data_dir.clone()))?;
            Ok(json!({ "stopped": true }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level)))
        .with_writer(std::io::stderr)
        .init();
    match run(&cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let chain: Vec<String> = e.chain().map(ToString::to_string).collect();
            eprintln!("{}", json!({ "error": chain.join(": ") }));
            ExitCode::FAILURE
        }
    }
}
