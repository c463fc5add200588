mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{
    eval::EvalArgs, fit::FitArgs, gen::GenArgs, gradcheck::GradcheckArgs, model::ModelCommand,
};

/// Markerless motion-capture kinematics: synthetic data, two-view
/// reconstruction, evaluation and gradient checks.
#[derive(Debug, Parser)]
#[command(name = "kinefit", version, about)]
struct Cli {
    /// TOML file supplying defaults for any subcommand (see docs/cli.md).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for per-clip parallelism (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Inspect and validate model files.
    #[command(subcommand)]
    Model(ModelCommand),
    /// Generate a synthetic dataset.
    Gen(GenArgs),
    /// Reconstruct motion and scales from two-view 2D keypoints.
    Fit(FitArgs),
    /// Compare predicted against ground-truth motion.
    Eval(EvalArgs),
    /// Check analytic loss gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

/// How a command that ran to completion ended.
pub enum Outcome {
    Success,
    /// Outputs were produced but a solver or check did not meet its target.
    NumericalFailure,
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    let numerical = err
        .chain()
        .filter_map(|e| e.downcast_ref::<kinefit::Error>())
        .any(kinefit::Error::is_numerical);
    if numerical {
        1
    } else {
        2
    }
}

/// Joins the context chain down to the first library error, whose message
/// already embeds its own causes.
fn describe(err: &anyhow::Error) -> String {
    let mut parts = Vec::new();
    for e in err.chain() {
        parts.push(e.to_string());
        if e.downcast_ref::<kinefit::Error>().is_some() {
            break;
        }
    }
    parts.join(": ")
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let config = config::Config::load(cli.config.as_deref())?;
    if let Some(jobs) = cli.jobs.or(config.jobs) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()?;
    }
    match cli.command {
        Command::Model(cmd) => commands::model::run(cmd),
        Command::Gen(args) => commands::gen::run(args, &config),
        Command::Fit(args) => commands::fit::run(args, &config),
        Command::Eval(args) => commands::eval::run(args),
        Command::Gradcheck(args) => commands::gradcheck::run(args, &config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::NumericalFailure) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code_for(&err))
        }
    }
}
