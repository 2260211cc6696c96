use std::path::PathBuf;
use std::process::ExitCode;

use adapt::config::{output_dir, parse_override, FileFormat, RunConfig, OUTPUT_DIR_ENV};
use adapt::run::{self, Context, ModelSource};
use adapt::Result;
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

/// Transformer force field on raw atomic coordinates: data generation,
/// training, evaluation and relaxation.
#[derive(Debug, Parser)]
#[command(name = "adapt", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration value, e.g. `train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "PATH=VALUE", global = true)]
    overrides: Vec<String>,
    /// Seed for data generation, splitting, initialization and dropout.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, short, global = true, env = OUTPUT_DIR_ENV)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a labelled synthetic dataset with the toy oracle.
    GenData {
        #[arg(long)]
        count: Option<usize>,
        /// Uniform displacement bound per coordinate, Angstrom.
        #[arg(long)]
        jitter: Option<f64>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Train the force model.
    TrainForce {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train the energy model.
    TrainEnergy {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate forces (and energies) on the test split.
    Evaluate {
        /// A force checkpoint, `oracle` or `zero`.
        #[arg(long)]
        model: ModelSource,
        /// Energy checkpoint.
        #[arg(long)]
        energy_model: Option<PathBuf>,
    },
    /// Relax test structures under a model and under the oracle.
    Relax {
        /// A force checkpoint, `oracle` or `zero`.
        #[arg(long)]
        model: ModelSource,
        #[arg(long)]
        energy_model: Option<PathBuf>,
        /// Number of test structures.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Retrain the force model for each attention-radius fraction.
    AblateRadius {
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Train every energy architecture on the same data.
    CompareEnergy {
        #[arg(long)]
        epochs: Option<usize>,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum Format {
    Xyz,
    Json,
}

fn overrides(cli: &Cli) -> Result<Vec<(String, Value)>> {
    let mut out = cli
        .common
        .overrides
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<Vec<_>>>()?;
    let mut push = |k: &str, v: Value| out.push((k.to_string(), v));
    if let Some(seed) = cli.common.seed {
        push("seed", json!(seed));
    }
    match &cli.command {
        Command::GenData { count, jitter, format } => {
            if let Some(c) = count {
                push("generate.count", json!(c));
            }
            if let Some(j) = jitter {
                push("generate.jitter", json!(j));
            }
            if let Some(f) = format {
                let f = match f {
                    Format::Xyz => FileFormat::Xyz,
                    Format::Json => FileFormat::Json,
                };
                push("generate.format", serde_json::to_value(f).unwrap());
            }
        }
        Command::TrainForce { epochs: Some(e) } | Command::TrainEnergy { epochs: Some(e) } => push("train.epochs", json!(e)),
        Command::AblateRadius { epochs: Some(e) } => push("ablation.epochs", json!(e)),
        Command::CompareEnergy { epochs: Some(e) } => push("compare.epochs", json!(e)),
        Command::Relax { count: Some(c), .. } => push("relax_count", json!(c)),
        _ => {}
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<run::Summary> {
    let cfg = RunConfig::load(cli.common.config.as_deref(), &overrides(&cli)?)?;
    let ctx = Context::new(cfg, output_dir(cli.common.out.clone()));
    match &cli.command {
        Command::GenData { .. } => run::gen_data(&ctx),
        Command::TrainForce { .. } => run::train_force(&ctx),
        Command::TrainEnergy { .. } => run::train_energy(&ctx),
        Command::Evaluate { model, energy_model } => run::evaluate(&ctx, model, energy_model.as_deref()),
        Command::Relax { model, energy_model, .. } => run::relax_compare(&ctx, model, energy_model.as_deref()),
        Command::AblateRadius { .. } => run::ablate(&ctx),
        Command::CompareEnergy { .. } => run::compare_energy(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
