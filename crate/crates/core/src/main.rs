use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use actpersist::harness::{self, ExperimentConfig, VerifySuite};
use actpersist::Result;

#[derive(Parser)]
#[command(name = "actpersist", version, about = "Action persistence experiments for batch RL")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect one dataset per seed.
    Collect(ConfigArg),
    /// Run PFQI for every (seed, k).
    Train(ConfigArg),
    /// Monte-Carlo evaluation of the trained greedy policies.
    Evaluate(ConfigArg),
    /// Persistence selection and performance loss.
    Select(ConfigArg),
    /// Flatten outputs into report tables.
    Report(ConfigArg),
    /// collect, train, evaluate, select and report in sequence.
    Run(ConfigArg),
    /// Numeric checks of the exact operators: a suite name or `all`.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the reports as JSON to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct ConfigArg {
    #[arg(long, short)]
    config: PathBuf,
}

fn print<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn execute(cmd: Command) -> Result<bool> {
    let load = |a: &ConfigArg| ExperimentConfig::read(&a.config);
    match cmd {
        Command::Collect(a) => print(&harness::cmd_collect(&load(&a)?)?)?,
        Command::Train(a) => print(&harness::cmd_train(&load(&a)?)?)?,
        Command::Evaluate(a) => print(&harness::cmd_evaluate(&load(&a)?)?)?,
        Command::Select(a) => print(&harness::cmd_select(&load(&a)?)?)?,
        Command::Report(a) => print(&harness::cmd_report(&load(&a)?)?)?,
        Command::Run(a) => print(&harness::run_all(&load(&a)?)?)?,
        Command::Verify { suite, seed, out } => {
            let suites = if suite == "all" {
                VerifySuite::ALL.to_vec()
            } else {
                vec![suite.parse()?]
            };
            let reports = suites
                .into_iter()
                .map(|s| harness::cmd_verify(s, seed))
                .collect::<Result<Vec<_>>>()?;
            let passed = reports.iter().all(|r| r.passed);
            let doc = json!({ "passed": passed, "reports": reports });
            if let Some(path) = out {
                std::fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
            }
            print(&doc)?;
            return Ok(passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            let doc = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{doc}");
            ExitCode::FAILURE
        }
    }
}
