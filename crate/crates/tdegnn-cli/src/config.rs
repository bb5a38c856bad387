//! Run configuration: JSON config file, flag overrides, and resolution into
//! validated per-task settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use tdegnn_core::models::TemporalVariant;
use tdegnn_core::train::{validate_hidden_dim, validate_train_step_size, TrainConfig};
use tdegnn_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Task {
    Pendulum,
    NodeClassify,
    Forecast,
}

impl Task {
    fn parse(name: &str) -> Result<Task> {
        match name {
            "pendulum" => Ok(Task::Pendulum),
            "node-classify" => Ok(Task::NodeClassify),
            "forecast" => Ok(Task::Forecast),
            other => Err(Error::config(
                "task",
                format!("unknown task '{other}', expected pendulum | node-classify | forecast"),
            )),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Task::Pendulum => "pendulum",
            Task::NodeClassify => "node-classify",
            Task::Forecast => "forecast",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TemporalKind {
    Direct,
    Attention,
}

/// All-optional mirror of the training settings for the config file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainPatch {
    pub lr_embed: Option<f64>,
    pub lr_temporal: Option<f64>,
    pub lr_spatial: Option<f64>,
    pub wd_embed: Option<f64>,
    pub wd_temporal: Option<f64>,
    pub wd_spatial: Option<f64>,
    pub dropout_input_output: Option<f64>,
    pub dropout_hidden: Option<f64>,
    pub epochs: Option<usize>,
    pub grad_clip: Option<f64>,
    pub batchnorm: Option<bool>,
}

/// On-disk run configuration; every field optional, explicit flags win.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Option<String>,
    pub order: Option<usize>,
    pub layers: Option<usize>,
    pub temporal: Option<String>,
    pub heads: Option<usize>,
    pub hidden: Option<usize>,
    pub step_size: Option<f64>,
    pub freeze_coefficients: Option<bool>,
    pub frames: Option<usize>,
    pub horizon: Option<usize>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub train: TrainPatch,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| {
            Error::data(path.display().to_string(), e.line(), format!("config: {e}"))
        })
    }
}

/// Flag values collected by clap; `None` means "not given on the command line".
#[derive(Debug, Clone, Default)]
pub struct TrainFlags {
    pub task: Option<Task>,
    pub order: Option<usize>,
    pub layers: Option<usize>,
    pub temporal: Option<TemporalKind>,
    pub heads: Option<usize>,
    pub hidden: Option<usize>,
    pub step_size: Option<f64>,
    pub freeze_coefficients: bool,
    pub frames: Option<usize>,
    pub horizon: Option<usize>,
    pub data: Option<PathBuf>,
    pub lr_embed: Option<f64>,
    pub lr_temporal: Option<f64>,
    pub lr_spatial: Option<f64>,
    pub wd_embed: Option<f64>,
    pub wd_temporal: Option<f64>,
    pub wd_spatial: Option<f64>,
    pub dropout_inout: Option<f64>,
    pub dropout_hidden: Option<f64>,
    pub epochs: Option<usize>,
    pub grad_clip: Option<f64>,
    pub batchnorm: bool,
}

/// Fully resolved settings for a training or evaluation run.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub task: Task,
    pub order: usize,
    pub layers: usize,
    pub variant: TemporalVariant,
    pub hidden: usize,
    pub step_size: f64,
    pub frames: usize,
    pub horizon: usize,
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: u64,
    pub train: TrainConfig,
}

/// Merge defaults < config file < flags, then validate against the
/// hyperparameter table ranges.
pub fn resolve(
    flags: &TrainFlags,
    file: &RunConfig,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<ResolvedRun> {
    let task = match (flags.task, &file.task) {
        (Some(t), _) => t,
        (None, Some(name)) => Task::parse(name)?,
        (None, None) => {
            return Err(Error::config(
                "task",
                "no task given (flag --task or config field \"task\")",
            ))
        }
    };

    let layers = flags.layers.or(file.layers).unwrap_or(match task {
        Task::NodeClassify => 4,
        Task::Pendulum | Task::Forecast => 1,
    });
    let frames = flags.frames.or(file.frames).unwrap_or(4);
    let horizon = flags.horizon.or(file.horizon).unwrap_or(1);
    let order = flags.order.or(file.order).unwrap_or(match task {
        Task::NodeClassify => layers.max(1),
        Task::Pendulum | Task::Forecast => frames,
    });
    let hidden = flags.hidden.or(file.hidden).unwrap_or(16);
    let step_size = flags.step_size.or(file.step_size).unwrap_or(match task {
        Task::NodeClassify => 0.5,
        Task::Pendulum | Task::Forecast => 0.1,
    });
    validate_hidden_dim(hidden)?;
    validate_train_step_size(step_size)?;

    let temporal = match (flags.temporal, &file.temporal) {
        (Some(t), _) => t,
        (None, Some(name)) => match name.as_str() {
            "direct" => TemporalKind::Direct,
            "attention" => TemporalKind::Attention,
            other => {
                return Err(Error::config(
                    "temporal",
                    format!("unknown variant '{other}', expected direct | attention"),
                ))
            }
        },
        (None, None) => TemporalKind::Direct,
    };
    let freeze = flags.freeze_coefficients || file.freeze_coefficients.unwrap_or(false);
    let variant = if freeze {
        let mut stencil = vec![0.0; order];
        stencil[0] = 1.0;
        TemporalVariant::Frozen { stencil }
    } else {
        match temporal {
            TemporalKind::Direct => TemporalVariant::Direct,
            TemporalKind::Attention => TemporalVariant::Attention {
                heads: flags.heads.or(file.heads).unwrap_or(4),
            },
        }
    };

    let seed = seed.or(file.seed).unwrap_or(0);
    let defaults = TrainConfig::default();
    let train = TrainConfig {
        lr_embed: flags.lr_embed.or(file.train.lr_embed).unwrap_or(defaults.lr_embed),
        lr_temporal: flags
            .lr_temporal
            .or(file.train.lr_temporal)
            .unwrap_or(defaults.lr_temporal),
        lr_spatial: flags
            .lr_spatial
            .or(file.train.lr_spatial)
            .unwrap_or(defaults.lr_spatial),
        wd_embed: flags.wd_embed.or(file.train.wd_embed).unwrap_or(defaults.wd_embed),
        wd_temporal: flags
            .wd_temporal
            .or(file.train.wd_temporal)
            .unwrap_or(defaults.wd_temporal),
        wd_spatial: flags
            .wd_spatial
            .or(file.train.wd_spatial)
            .unwrap_or(defaults.wd_spatial),
        dropout_input_output: flags
            .dropout_inout
            .or(file.train.dropout_input_output)
            .unwrap_or(defaults.dropout_input_output),
        dropout_hidden: flags
            .dropout_hidden
            .or(file.train.dropout_hidden)
            .unwrap_or(defaults.dropout_hidden),
        epochs: flags.epochs.or(file.train.epochs).unwrap_or(defaults.epochs),
        seed,
        grad_clip: flags.grad_clip.or(file.train.grad_clip),
        batchnorm: flags.batchnorm || file.train.batchnorm.unwrap_or(false),
    };
    train.validate()?;

    Ok(ResolvedRun {
        task,
        order,
        layers,
        variant,
        hidden,
        step_size,
        frames,
        horizon,
        data: flags.data.clone().or_else(|| file.data.clone()),
        out: out
            .map(Path::to_path_buf)
            .or_else(|| file.out.clone())
            .unwrap_or_else(|| PathBuf::from("out")),
        seed,
        train,
    })
}
