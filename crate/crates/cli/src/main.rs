use std::io::BufRead;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde_json::Value;

use lodestar_cli::bench::{cmd_bench, Suite};
use lodestar_cli::options::{parse_seeds, BackendOptions};
use lodestar_cli::run::{cmd_run, RunConfig};
use lodestar_cli::service::{serve, AppState};
use lodestar_core::bo::Method;

#[derive(Parser)]
#[command(name = "lodestar", version, about = "Reasoning-augmented Bayesian optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method on one compass for several seeds.
    Run {
        /// Compass JSON with an `evaluator` entry.
        #[arg(long)]
        compass: PathBuf,
        /// reasoning-bo, vanilla-bo, analytic-ei, cma-es or random.
        #[arg(long, value_parser = parse_method)]
        method: Method,
        /// `3`, `1,4,9` or the inclusive range `0..9`.
        #[arg(long, default_value = "0", value_parser = parse_seed_list)]
        seeds: SeedList,
        /// Total evaluations per seed; defaults to the compass budget.
        #[arg(long)]
        budget: Option<usize>,
        /// OpenAI-compatible base URL (or set LODESTAR_BACKEND_URL).
        #[arg(long)]
        backend_url: Option<String>,
        /// Scripted transcript replacing the live backend.
        #[arg(long)]
        scripted: Option<PathBuf>,
        /// Directory for trajectory CSVs and event logs.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run a suite of methods × benchmarks and write metrics reports.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, default_value = "bench-out")]
        out: PathBuf,
        /// Skip cells whose outputs are already complete.
        #[arg(long)]
        resume: bool,
    },
    /// Serve the /v1 ask-tell API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "state")]
        state_dir: PathBuf,
        #[arg(long)]
        backend_url: Option<String>,
        #[arg(long)]
        scripted: Option<PathBuf>,
    },
    /// Test evaluator: replies with the sum of the numeric parameters.
    #[command(hide = true)]
    EchoEvaluator,
}

#[derive(Clone)]
struct SeedList(Vec<u64>);

fn parse_seed_list(text: &str) -> Result<SeedList, String> {
    parse_seeds(text).map(SeedList)
}

fn parse_method(text: &str) -> Result<Method, String> {
    Method::parse(text).map_err(|e| e.to_string())
}

fn echo_evaluator() -> anyhow::Result<()> {
    let mut line = String::new();
    std::io::stdin().lock().read_line(&mut line)?;
    let request: Value = serde_json::from_str(&line)?;
    let sum: f64 = request["parameters"]
        .as_object()
        .map(|m| m.values().filter_map(Value::as_f64).sum())
        .unwrap_or(0.0);
    println!("{}", serde_json::json!({ "value": sum }));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            compass,
            method,
            seeds,
            budget,
            backend_url,
            scripted,
            out,
        } => cmd_run(&RunConfig {
            compass,
            method,
            seeds: seeds.0,
            budget,
            backend: BackendOptions::new(backend_url, scripted),
            out,
        })
        .map(|outcomes| {
            for o in outcomes {
                let flags = if o.flags.is_empty() { String::new() } else { format!(" [{}]", o.flags.join(", ")) };
                println!("seed {}: {} rows -> {}{flags}", o.seed, o.rows, o.trajectory.display());
            }
        }),
        Command::Bench { suite, out, resume } => Suite::load(&suite).and_then(|s| cmd_bench(&s, &out, resume)).map(|summary| {
            println!("{} cells run, {} skipped", summary.cells_run, summary.cells_skipped);
            for r in summary.reports {
                println!("{}", r.display());
            }
        }),
        Command::Serve {
            port,
            state_dir,
            backend_url,
            scripted,
        } => (|| {
            let backend = BackendOptions::new(backend_url, scripted).build()?.map(Arc::from);
            let state = AppState::open(&state_dir, backend)?;
            tokio::runtime::Runtime::new()?.block_on(serve(port, state))
        })(),
        Command::EchoEvaluator => echo_evaluator(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
