use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use markov_gap::exec::{configure_threads, ExecPolicy};
use markov_gap_cli::config::{parse_config_value, ExperimentConfig, SchemaError, Task, DEFAULT_SUITE};
use markov_gap_cli::report::{write_report, Format};
use markov_gap_cli::runner::run_suite;
use serde_json::Value;

#[derive(Parser)]
#[command(name = "markov-gap", version, about = "Spectral gaps of Markov maps on finite tracial algebras")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON). Without it the built-in default suite runs.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Comma-separated p values, overriding the config's p_grid.
    #[arg(long, global = true, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    restarts: Option<usize>,
    /// Report path; stdout when absent and the config names no output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads for parallel restarts.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Markov-map validity of each channel.
    Validate,
    /// Witnessed L_p gap estimates bracketed by closed-form bounds.
    Estimate,
    /// Closed-form forward bounds and their asymptotic slopes.
    Bounds,
    /// Randomized checks of the supporting inequalities.
    Lemmas,
    /// Σ-norm equivalence for pairs of subalgebras.
    Sigma,
    /// Every task listed in the config.
    Report,
}

enum Failure {
    Config(Vec<SchemaError>),
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        None => DEFAULT_SUITE.to_string(),
    };
    let mut value: Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Config(vec![SchemaError { path: "$".into(), message: format!("invalid JSON: {e}") }]))?;
    if let Value::Object(m) = &mut value {
        if let Some(ps) = &cli.p {
            m.insert("p_grid".into(), ps.iter().map(|&p| Value::from(p)).collect());
        }
        if let Some(s) = cli.seed {
            m.insert("seed".into(), s.into());
        }
        if let Some(r) = cli.restarts {
            m.insert("restarts".into(), r.into());
        }
        let task = match cli.command {
            Command::Validate => Some(Task::Validate),
            Command::Estimate => Some(Task::Gap),
            Command::Bounds => Some(Task::Bounds),
            Command::Lemmas => Some(Task::Lemmas),
            Command::Sigma => Some(Task::Sigma),
            Command::Report => None,
        };
        if let Some(t) = task {
            m.insert("tasks".into(), Value::from(vec![t.as_str()]));
        }
    }
    parse_config_value(&value).map_err(Failure::Config)
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    if let Some(n) = cli.threads {
        configure_threads(n).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    }
    let cfg = load(cli)?;
    let rows = run_suite(&cfg, &cfg.tasks, ExecPolicy::default());
    let out = cli.out.clone().or_else(|| cfg.output.clone());
    write_report(&rows, out.as_deref(), cli.format)?;
    Ok(rows.iter().all(|r| r.pass))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(errors)) => {
            for e in errors {
                eprintln!("config error: {e}");
            }
            ExitCode::from(2)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
