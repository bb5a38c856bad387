//! `tdegnn`: simulate the pendulum benchmark, train and evaluate models,
//! analyze learned stencils, and run the order-comparison experiment.

mod commands;
mod config;
mod datasets;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tdegnn_core::pendulum::{ExperimentConfig, PendulumConfig};
use tdegnn_core::Error;

use config::{resolve, RunConfig, Task, TemporalKind, TrainFlags};

#[derive(Parser)]
#[command(
    name = "tdegnn",
    version,
    about = "Graph networks from higher-order ODE discretizations with learned temporal stencils"
)]
struct Cli {
    /// Root seed; every random draw in the process derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output artifacts (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON run configuration; explicit flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the pendulum and write the trajectory CSV.
    SimulatePendulum(SimulateArgs),
    /// Train a model; writes checkpoint.tdeg, metrics.csv, coefficients.json.
    Train(TrainArgs),
    /// Evaluate a checkpoint; writes eval.json.
    Eval(EvalArgs),
    /// Stencil analysis reports.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Pendulum order-comparison experiment (naive baseline included).
    RunExperiment(ExperimentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Initial angle in radians.
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    theta0: f64,
    /// Initial angular velocity in rad/s.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    omega0: f64,
    /// Integrator step in seconds.
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    /// Number of recorded states.
    #[arg(long, default_value_t = 500)]
    steps: usize,
    /// Frequency modulation depth.
    #[arg(long, default_value_t = 0.04)]
    modulation: f64,
    /// Forcing sign: -1 oscillates around 0, +1 is the literal unstable form.
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    forcing_sign: f64,
    /// Rod length in meters.
    #[arg(long, default_value_t = 1.0)]
    length: f64,
}

#[derive(Args, Default)]
struct ModelFlags {
    /// Task to run: pendulum | node-classify | forecast.
    #[arg(long, value_enum)]
    task: Option<Task>,
    /// Temporal order (history depth).
    #[arg(long)]
    order: Option<usize>,
    /// Layer count.
    #[arg(long)]
    layers: Option<usize>,
    /// Coefficient mechanism.
    #[arg(long, value_enum)]
    temporal: Option<TemporalKind>,
    /// Attention head count.
    #[arg(long)]
    heads: Option<usize>,
    /// Hidden channels (one of 8, 16, 32, 64, 128, 256).
    #[arg(long)]
    hidden: Option<usize>,
    /// Step size h in [1e-3, 1].
    #[arg(long)]
    step_size: Option<f64>,
    /// Freeze the stencil at forward Euler [1, 0, ...]; with --order 1 this
    /// is the first-order baseline network.
    #[arg(long)]
    freeze_c: bool,
    /// Observed frames per window (temporal tasks).
    #[arg(long)]
    frames: Option<usize>,
    /// Predicted frames per window (temporal tasks).
    #[arg(long)]
    horizon: Option<usize>,
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr_embed: Option<f64>,
    #[arg(long)]
    lr_temporal: Option<f64>,
    #[arg(long)]
    lr_spatial: Option<f64>,
    #[arg(long)]
    wd_embed: Option<f64>,
    #[arg(long)]
    wd_temporal: Option<f64>,
    #[arg(long)]
    wd_spatial: Option<f64>,
    /// Dropout on the input and output stages.
    #[arg(long)]
    dropout_inout: Option<f64>,
    /// Dropout on hidden states.
    #[arg(long)]
    dropout_hidden: Option<f64>,
    /// Global gradient-norm clip.
    #[arg(long)]
    grad_clip: Option<f64>,
    /// Feature normalization after each spatial term.
    #[arg(long)]
    batchnorm: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    ckpt: PathBuf,
    #[command(flatten)]
    model: ModelFlags,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Characteristic roots and the root condition.
    Stability(AnalyzeArgs),
    /// Stencil consistency against sin(2 pi t).
    Consistency(AnalyzeArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Comma-separated stencil, e.g. "2,-1". Must sum to 1.
    #[arg(long, allow_hyphen_values = true)]
    coeffs: Option<String>,
    /// Checkpoint to read the stencil from instead of --coeffs.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Layer index inside the checkpoint.
    #[arg(long)]
    layer: Option<usize>,
    /// Sampling grid start:stop:step (consistency only).
    #[arg(long, default_value = "0:1:0.01")]
    grid: String,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Orders to train, comma separated.
    #[arg(long, default_value = "1,2")]
    orders: String,
    #[command(flatten)]
    model: ModelFlags,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(err: Error) -> Failure {
        let code = match &err {
            Error::Data { .. } | Error::Config { .. } => 2,
            _ => 1,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

fn model_flags_to_train_flags(flags: &ModelFlags) -> TrainFlags {
    TrainFlags {
        task: flags.task,
        order: flags.order,
        layers: flags.layers,
        temporal: flags.temporal,
        heads: flags.heads,
        hidden: flags.hidden,
        step_size: flags.step_size,
        freeze_coefficients: flags.freeze_c,
        frames: flags.frames,
        horizon: flags.horizon,
        data: flags.data.clone(),
        lr_embed: flags.lr_embed,
        lr_temporal: flags.lr_temporal,
        lr_spatial: flags.lr_spatial,
        wd_embed: flags.wd_embed,
        wd_temporal: flags.wd_temporal,
        wd_spatial: flags.wd_spatial,
        dropout_inout: flags.dropout_inout,
        dropout_hidden: flags.dropout_hidden,
        epochs: flags.epochs,
        grad_clip: flags.grad_clip,
        batchnorm: flags.batchnorm,
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file_config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let out_dir = cli
        .out
        .clone()
        .or_else(|| file_config.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    match &cli.command {
        Command::SimulatePendulum(args) => {
            let config = PendulumConfig {
                theta0: args.theta0,
                angular_velocity0: args.omega0,
                dt: args.dt,
                steps: args.steps,
                base_freq: 1.0,
                modulation: args.modulation,
                forcing_sign: args.forcing_sign,
                length: args.length,
            };
            let path = commands::cmd_simulate_pendulum(&config, &out_dir)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Train(args) => {
            let flags = model_flags_to_train_flags(&args.model);
            let resolved = resolve(&flags, &file_config, cli.seed, Some(&out_dir))?;
            commands::cmd_train(&resolved)?;
            Ok(())
        }
        Command::Eval(args) => {
            let flags = model_flags_to_train_flags(&args.model);
            let resolved = resolve(&flags, &file_config, cli.seed, Some(&out_dir))?;
            commands::cmd_eval(&resolved, &args.ckpt)?;
            Ok(())
        }
        Command::Analyze(which) => {
            let args = match which {
                AnalyzeCommand::Stability(a) | AnalyzeCommand::Consistency(a) => a,
            };
            let coeffs = commands::resolve_coefficients(
                args.coeffs.as_deref(),
                args.ckpt.as_deref(),
                args.layer,
            )?;
            match which {
                AnalyzeCommand::Stability(_) => {
                    commands::cmd_analyze_stability(&coeffs, &out_dir)?
                }
                AnalyzeCommand::Consistency(_) => {
                    let grid = commands::parse_grid(&args.grid)?;
                    commands::cmd_analyze_consistency(&coeffs, grid, &out_dir)?
                }
            }
            Ok(())
        }
        Command::RunExperiment(args) => {
            let orders = args
                .orders
                .split(',')
                .map(|o| {
                    o.trim().parse::<usize>().map_err(|_| {
                        Error::config("orders", format!("'{o}' is not a positive integer"))
                    })
                })
                .collect::<Result<Vec<usize>, Error>>()?;
            let mut flags = model_flags_to_train_flags(&args.model);
            flags.task = Some(Task::Pendulum);
            let resolved = resolve(&flags, &file_config, cli.seed, Some(&out_dir))?;
            let defaults = ExperimentConfig::default();
            let config = ExperimentConfig {
                pendulum: PendulumConfig::default(),
                orders,
                frames: resolved.frames,
                horizon: resolved.horizon,
                split: commands::DEFAULT_SPLIT,
                hidden_dim: resolved.hidden,
                layers: resolved.layers,
                step_size: resolved.step_size,
                variant: resolved.variant,
                train: tdegnn_core::train::TrainConfig {
                    epochs: args.model.epochs.unwrap_or(defaults.train.epochs),
                    ..resolved.train
                },
            };
            commands::cmd_run_experiment(&config, &out_dir)?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}
