use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;
mod manifest;

use error::CliError;

/// Trajectory VAE pipeline: synthesize data, train, sample, evaluate and
/// sweep the divergence weight.
#[derive(Debug, Parser)]
#[command(name = "lagvae", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Config override `key.path=value`, e.g. `train.learning_rate=0.03`.
    /// Repeatable; applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate surrogate ground-truth trajectories.
    Synth,
    /// Train a model on a trajectory CSV.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Divergence weight, in (0, 1).
        #[arg(long)]
        w: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        /// Check backprop against finite differences on a tiny network
        /// instead of training; exits 0 iff the max relative error < 1e-4.
        #[arg(long)]
        gradient_audit: bool,
    },
    /// Decode random latent codes of a trained model into trajectories.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Compare generated trajectories with the truth.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, required_unless_present = "self_mode")]
        generated: Option<PathBuf>,
        /// Evaluate the truth against itself (baseline matrices).
        #[arg(long)]
        self_mode: bool,
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Train, sample and score one model per divergence weight.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated weights, e.g. `1e-3,1e-4,1e-5`.
        #[arg(long, value_delimiter = ',')]
        w_list: Option<Vec<f64>>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Train { .. } => "train",
            Command::Sample { .. } => "sample",
            Command::Eval { .. } => "eval",
            Command::Sweep { .. } => "sweep",
        }
    }

    /// Typed flags, as overrides on top of `--set`.
    fn overrides(&self) -> Vec<(String, serde_json::Value)> {
        let mut out = Vec::new();
        let mut push = |k: &str, v: serde_json::Value| out.push((k.to_string(), v));
        match self {
            Command::Train { w, iterations, learning_rate, gradient_audit, .. } => {
                if let Some(w) = w {
                    push("train.w", (*w).into());
                }
                if let Some(i) = iterations {
                    push("train.iterations", (*i).into());
                }
                if let Some(lr) = learning_rate {
                    push("train.learning_rate", (*lr).into());
                }
                if *gradient_audit {
                    push("train.gradient_audit", true.into());
                }
            }
            Command::Sample { count: Some(c), .. } => push("sample.count", (*c).into()),
            Command::Eval { bins: Some(b), .. } => push("eval.bins", (*b).into()),
            Command::Sweep { w_list: Some(ws), .. } => push("sweep.w_list", ws.clone().into()),
            _ => {}
        }
        out
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides =
        cli.common.overrides.iter().map(|s| config::parse_override(s)).collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = cli.common.seed {
        overrides.push(("seed".into(), seed.into()));
    }
    overrides.extend(cli.command.overrides());
    let cfg = config::resolve(cli.common.config.as_deref(), &overrides)?;
    std::fs::create_dir_all(&cli.common.out).map_err(|e| CliError::Io(format!("{}: {e}", cli.common.out.display())))?;

    let mut run = manifest::Run::start(cli.command.name(), cli.common.config.as_deref(), &cli.common.out, &cfg);
    let result = match &cli.command {
        Command::Synth => commands::synth(&cfg, &mut run),
        Command::Train { data, .. } => commands::train(&cfg, data, &mut run),
        Command::Sample { checkpoint, .. } => commands::sample(&cfg, checkpoint, &mut run),
        Command::Eval { truth, generated, self_mode, .. } => {
            let generated = if *self_mode { None } else { generated.as_deref() };
            commands::eval(&cfg, truth, generated, &mut run)
        }
        Command::Sweep { data, .. } => commands::sweep(&cfg, data, &mut run),
    };
    let finished = run.finish(result.as_ref().err());
    result.and(finished)
}
