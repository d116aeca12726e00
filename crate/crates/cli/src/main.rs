use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use erfact_cli::bench::{self, BenchConfig, Target};
use erfact_cli::config::{parse_activations, ExperimentConfig};
use erfact_cli::curves::{write_curves, CurveSpec};
use erfact_cli::{experiment, gradcheck, CliError};
use erfact_core::ActivationKind;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(
    name = "erfact",
    version,
    about = "Trainable erf activations: checks, curves, training, timing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchTarget {
    Network,
    Activation,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Finite-difference check of every activation derivative and of
    /// whole-network gradients.
    Gradcheck {
        /// Checks the configured activations; all kinds when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Writes activation values and derivatives on a grid as CSV.
    Curves {
        #[arg(long, default_value = "erfact,pserf,swish")]
        kinds: String,
        /// First parameter values (alpha, gamma, slope, swish beta).
        #[arg(long, default_value = "0.75")]
        alpha: String,
        /// Second parameter values (beta, delta).
        #[arg(long, default_value = "0.75")]
        beta: String,
        #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
        xmin: f64,
        #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
        xmax: f64,
        #[arg(long, default_value_t = 0.01)]
        step: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Trains each activation for each seed and writes report, timing and
    /// summary CSVs.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `out_dir` from the configuration.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Times forward and backward passes per activation.
    Bench {
        #[arg(long, default_value = "relu,erfact,pserf")]
        kinds: String,
        /// N,C,H,W
        #[arg(long, default_value = "32,3,32,32")]
        shape: String,
        #[arg(long, default_value_t = 50)]
        repeats: usize,
        #[arg(long, default_value_t = 50)]
        warmup: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = BenchTarget::Both)]
        target: BenchTarget,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn floats(name: &str, s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse()
                .map_err(|_| CliError::Usage(format!("--{name}: bad number `{v}`")))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gradcheck { config } => {
            let cfg = match &config {
                Some(path) => ExperimentConfig::load(path)?,
                None => ExperimentConfig {
                    activations: ActivationKind::ALL.to_vec(),
                    ..ExperimentConfig::default()
                },
            };
            let rows = gradcheck::run(
                &cfg.activations,
                |k| cfg.init_params(k),
                cfg.inject_fault.as_deref(),
            )?;
            print!("{}", gradcheck::rows_csv(&rows)?);
            gradcheck::verdict(&rows)
        }
        Command::Curves {
            kinds,
            alpha,
            beta,
            xmin,
            xmax,
            step,
            out,
        } => {
            let spec = CurveSpec {
                kinds: parse_activations(&kinds)?,
                first: floats("alpha", &alpha)?,
                second: floats("beta", &beta)?,
                xmin,
                xmax,
                step,
            };
            write_curves(&spec, &out)
        }
        Command::Train { config, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(out) = out {
                cfg.out_dir = out;
            }
            experiment::run(&cfg, &|line| eprintln!("{line}"))?;
            Ok(())
        }
        Command::Bench {
            kinds,
            shape,
            repeats,
            warmup,
            seed,
            target,
            out,
        } => {
            let dims: Vec<usize> = shape
                .split(',')
                .map(|d| d.trim().parse())
                .collect::<Result<_, _>>()
                .map_err(|_| {
                    CliError::Usage(format!("--shape: expected N,C,H,W, got `{shape}`"))
                })?;
            let shape: [usize; 4] = dims
                .try_into()
                .map_err(|_| CliError::Usage("--shape needs four dimensions".into()))?;
            let cfg = BenchConfig {
                kinds: parse_activations(&kinds)?,
                shape,
                repeats,
                warmup,
                seed,
                targets: match target {
                    BenchTarget::Network => vec![Target::Network],
                    BenchTarget::Activation => vec![Target::Activation],
                    BenchTarget::Both => vec![Target::Network, Target::Activation],
                },
            };
            let table = bench::rows_csv(&bench::run(&cfg)?)?;
            print!("{table}");
            if let Some(path) = out {
                std::fs::write(&path, table).map_err(|e| CliError::io(path, e))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
