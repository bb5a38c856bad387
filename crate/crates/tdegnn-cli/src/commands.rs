//! Command implementations and artifact writers.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use tdegnn_core::analysis::{consistency_check, root_condition, TestFunction};
use tdegnn_core::data::{ForecastDataset, NodeDataset};
use tdegnn_core::graph::{normalized_laplacian, SparseOperator};
use tdegnn_core::models::{
    read_checkpoint_file, DropoutRng, LoadedModel, StationaryConfig, StationaryModel,
    TemporalConfig, TemporalModel, TemporalVariant,
};
use tdegnn_core::pendulum::{
    make_dataset, run_experiment, simulate, ExperimentConfig, ExperimentResult, PendulumConfig,
};
use tdegnn_core::rng::RootRng;
use tdegnn_core::tensor::Tape;
use tdegnn_core::train::{
    accuracy, forecast_mse, train_forecaster, train_node_classifier, EpochMetrics, TrainOutcome,
};
use tdegnn_core::{Error, Result};

use crate::config::{ResolvedRun, Task};
use crate::datasets::{load_forecast_dataset, load_node_dataset};

pub const DEFAULT_SPLIT: (f64, f64, f64) = (0.7, 0.15, 0.15);

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(contents)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::state(format!("report serialization failed: {e}")))?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

// ---------------------------------------------------------------------------
// simulate-pendulum
// ---------------------------------------------------------------------------

pub fn cmd_simulate_pendulum(config: &PendulumConfig, out_dir: &Path) -> Result<PathBuf> {
    let trajectory = simulate(config)?;
    ensure_dir(out_dir)?;
    let path = out_dir.join("trajectory.csv");
    let mut csv = String::from("t,theta,x1,y1\n");
    for i in 0..trajectory.steps() {
        let (x, y) = trajectory.positions[i];
        csv.push_str(&format!(
            "{},{},{},{}\n",
            trajectory.times[i], trajectory.angles[i], x, y
        ));
    }
    write_file(&path, csv.as_bytes())?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// train / eval
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct CoefficientsReport {
    task: String,
    variant: String,
    order: usize,
    layers: Vec<Vec<f64>>,
}

fn variant_name(variant: &TemporalVariant) -> &'static str {
    match variant {
        TemporalVariant::Direct => "direct",
        TemporalVariant::Attention { .. } => "attention",
        TemporalVariant::Frozen { .. } => "frozen",
    }
}

fn metrics_csv(history: &[EpochMetrics]) -> String {
    let mut csv = String::from("epoch,train_loss,val_loss,val_metric,test_metric,wall_ms\n");
    for m in history {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.epoch, m.train_loss, m.val_loss, m.val_metric, m.test_metric, m.wall_ms
        ));
    }
    csv
}

fn pendulum_dataset(run: &ResolvedRun) -> Result<ForecastDataset> {
    match &run.data {
        Some(dir) => load_forecast_dataset(dir, run.frames, run.horizon, DEFAULT_SPLIT),
        None => {
            let trajectory = simulate(&PendulumConfig::default())?;
            make_dataset(&trajectory, run.frames, run.horizon, DEFAULT_SPLIT)
        }
    }
}

fn require_data(run: &ResolvedRun) -> Result<&PathBuf> {
    run.data.as_ref().ok_or_else(|| {
        Error::config(
            "data",
            format!("task {} needs --data (or config field \"data\")", run.task.name()),
        )
    })
}

fn temporal_model_config(run: &ResolvedRun, input_dim: usize) -> TemporalConfig {
    TemporalConfig {
        input_dim,
        hidden_dim: run.hidden,
        frames: run.frames,
        horizon: run.horizon,
        layers: run.layers,
        order: run.order,
        step_size: run.step_size,
        variant: run.variant.clone(),
        dropout_input_output: run.train.dropout_input_output,
        dropout_hidden: run.train.dropout_hidden,
        batchnorm: run.train.batchnorm,
    }
}

pub fn cmd_train(run: &ResolvedRun) -> Result<()> {
    ensure_dir(&run.out)?;
    match run.task {
        Task::Pendulum | Task::Forecast => {
            let data = match run.task {
                Task::Pendulum => pendulum_dataset(run)?,
                _ => load_forecast_dataset(require_data(run)?, run.frames, run.horizon, DEFAULT_SPLIT)?,
            };
            let model = TemporalModel::new(
                temporal_model_config(run, data.input_dim),
                &RootRng::new(run.seed),
            )?;
            let outcome = train_forecaster(&model, &data, &run.train)?;
            finish_temporal_run(run, &model, &data, &outcome)
        }
        Task::NodeClassify => {
            let data = load_node_dataset(require_data(run)?)?;
            let (_, input_dim) = data.features.dims2()?;
            let config = StationaryConfig {
                input_dim,
                hidden_dim: run.hidden,
                output_dim: data.num_classes,
                layers: run.layers,
                order: run.order,
                step_size: run.step_size,
                variant: run.variant.clone(),
                dropout_input_output: run.train.dropout_input_output,
                dropout_hidden: run.train.dropout_hidden,
                batchnorm: run.train.batchnorm,
            };
            let model = StationaryModel::new(config, &RootRng::new(run.seed))?;
            let outcome = train_node_classifier(&model, &data, &run.train)?;
            write_file(&run.out.join("checkpoint.tdeg"), &model.save_checkpoint()?)?;
            write_file(&run.out.join("metrics.csv"), metrics_csv(&outcome.history).as_bytes())?;
            let laplacian = Arc::new(normalized_laplacian(&data.graph));
            let layers = match model.static_coefficients() {
                Some(layers) => layers,
                None => model.probe_coefficients(&laplacian, &data.features)?,
            };
            write_json(
                &run.out.join("coefficients.json"),
                &CoefficientsReport {
                    task: run.task.name().to_string(),
                    variant: variant_name(&run.variant).to_string(),
                    order: run.order,
                    layers,
                },
            )?;
            print_outcome(&outcome);
            Ok(())
        }
    }
}

fn finish_temporal_run(
    run: &ResolvedRun,
    model: &TemporalModel,
    data: &ForecastDataset,
    outcome: &TrainOutcome,
) -> Result<()> {
    write_file(&run.out.join("checkpoint.tdeg"), &model.save_checkpoint()?)?;
    write_file(&run.out.join("metrics.csv"), metrics_csv(&outcome.history).as_bytes())?;
    let layers = match model.static_coefficients() {
        Some(layers) => layers,
        None => {
            let laplacian = Arc::new(normalized_laplacian(&data.graph));
            let probe = data
                .val
                .first()
                .or_else(|| data.train.first())
                .ok_or_else(|| Error::config("split", "no windows to probe"))?;
            model.probe_coefficients(&laplacian, &probe.frames, &probe.times)?
        }
    };
    write_json(
        &run.out.join("coefficients.json"),
        &CoefficientsReport {
            task: run.task.name().to_string(),
            variant: variant_name(&run.variant).to_string(),
            order: run.order,
            layers,
        },
    )?;
    print_outcome(outcome);
    Ok(())
}

fn print_outcome(outcome: &TrainOutcome) {
    match (outcome.history.last(), outcome.best_epoch) {
        (Some(last), Some(best)) => println!(
            "trained {} epochs; best validation loss {} at epoch {best}; final test metric {}",
            outcome.history.len(),
            outcome.best_val_loss,
            last.test_metric
        ),
        _ => println!("trained 0 epochs (initial parameters kept)"),
    }
}

#[derive(Serialize)]
struct EvalReport {
    task: String,
    metric: String,
    train: f64,
    val: f64,
    test: f64,
}

pub fn cmd_eval(run: &ResolvedRun, checkpoint: &Path) -> Result<()> {
    ensure_dir(&run.out)?;
    let loaded = read_checkpoint_file(checkpoint)?;
    let report = match (run.task, loaded) {
        (Task::NodeClassify, LoadedModel::Stationary(model)) => {
            let data = load_node_dataset(require_data(run)?)?;
            eval_stationary(&model, &data)?
        }
        (Task::Pendulum, LoadedModel::Temporal(model)) => {
            let cfg = model.config().clone();
            let data = match &run.data {
                Some(dir) => load_forecast_dataset(dir, cfg.frames, cfg.horizon, DEFAULT_SPLIT)?,
                None => {
                    let trajectory = simulate(&PendulumConfig::default())?;
                    make_dataset(&trajectory, cfg.frames, cfg.horizon, DEFAULT_SPLIT)?
                }
            };
            eval_temporal(&model, &data, "pendulum")?
        }
        (Task::Forecast, LoadedModel::Temporal(model)) => {
            let cfg = model.config().clone();
            let data =
                load_forecast_dataset(require_data(run)?, cfg.frames, cfg.horizon, DEFAULT_SPLIT)?;
            eval_temporal(&model, &data, "forecast")?
        }
        (task, _) => {
            return Err(Error::config(
                "task",
                format!("checkpoint kind does not match task {}", task.name()),
            ))
        }
    };
    println!(
        "{} {}: train {} / val {} / test {}",
        report.task, report.metric, report.train, report.val, report.test
    );
    write_json(&run.out.join("eval.json"), &report)
}

fn eval_stationary(model: &StationaryModel, data: &NodeDataset) -> Result<EvalReport> {
    let laplacian = Arc::new(normalized_laplacian(&data.graph));
    let mut rng = DropoutRng::new(RootRng::new(0));
    let mut tape = Tape::new();
    let logits = model.forward(&mut tape, &laplacian, &data.features, false, &mut rng)?;
    Ok(EvalReport {
        task: "node-classify".into(),
        metric: "accuracy".into(),
        train: accuracy(&logits, &data.labels, &data.train_mask),
        val: accuracy(&logits, &data.labels, &data.val_mask),
        test: accuracy(&logits, &data.labels, &data.test_mask),
    })
}

fn eval_temporal(model: &TemporalModel, data: &ForecastDataset, task: &str) -> Result<EvalReport> {
    let laplacian: Arc<SparseOperator> = Arc::new(normalized_laplacian(&data.graph));
    let mut rng = DropoutRng::new(RootRng::new(0));
    Ok(EvalReport {
        task: task.into(),
        metric: "mse".into(),
        train: forecast_mse(model, &laplacian, &data.train, &mut rng)?,
        val: forecast_mse(model, &laplacian, &data.val, &mut rng)?,
        test: forecast_mse(model, &laplacian, &data.test, &mut rng)?,
    })
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

/// Coefficients from a `--coeffs` flag or extracted from a checkpoint layer.
pub fn resolve_coefficients(
    coeffs: Option<&str>,
    checkpoint: Option<&Path>,
    layer: Option<usize>,
) -> Result<Vec<f64>> {
    match (coeffs, checkpoint) {
        (Some(text), _) => text
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|_| {
                    Error::config("coeffs", format!("'{f}' is not a number"))
                })
            })
            .collect(),
        (None, Some(path)) => {
            let layer = layer.unwrap_or(0);
            let layers = match read_checkpoint_file(path)? {
                LoadedModel::Stationary(m) => m.static_coefficients(),
                LoadedModel::Temporal(m) => m.static_coefficients(),
            }
            .ok_or_else(|| {
                Error::config(
                    "ckpt",
                    "attention stencils are data-dependent; pass --coeffs instead",
                )
            })?;
            layers.get(layer).cloned().ok_or_else(|| {
                Error::config("layer", format!("checkpoint has {} layers", layers.len()))
            })
        }
        (None, None) => Err(Error::config("coeffs", "need --coeffs or --ckpt")),
    }
}

pub fn cmd_analyze_stability(coeffs: &[f64], out_dir: &Path) -> Result<()> {
    let report = root_condition(coeffs)?;
    ensure_dir(out_dir)?;
    write_json(&out_dir.join("stability_report.json"), &report)?;
    let abs: Vec<String> = report.roots.iter().map(|r| format!("{:.6}", r.abs)).collect();
    println!(
        "order {}: |roots| = [{}], max = {:.6} -> {}{}",
        report.order,
        abs.join(", "),
        report.max_abs_root,
        if report.stable { "stable" } else { "UNSTABLE" },
        if report.weakly_stable_warning {
            " (warning: repeated root on the unit circle)"
        } else {
            ""
        }
    );
    Ok(())
}

/// Grid syntax `start:stop:step`.
pub fn parse_grid(text: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::config(
            "grid",
            format!("expected start:stop:step, got '{text}'"),
        ));
    }
    let mut values = [0.0; 3];
    for (slot, part) in values.iter_mut().zip(&parts) {
        *slot = part
            .parse::<f64>()
            .map_err(|_| Error::config("grid", format!("'{part}' is not a number")))?;
    }
    Ok((values[0], values[1], values[2]))
}

pub fn cmd_analyze_consistency(coeffs: &[f64], grid: (f64, f64, f64), out_dir: &Path) -> Result<()> {
    let (start, stop, step) = grid;
    let report = consistency_check(coeffs, TestFunction::Sin2Pi, start, stop, step)?;
    ensure_dir(out_dir)?;
    write_json(&out_dir.join("consistency_report.json"), &report)?;
    match report.inferred_order {
        Some(order) => println!(
            "stencil matches a derivative of order {order}: beta = {:.6e}, R^2 = {:.6}",
            report.beta, report.r2
        ),
        None => println!(
            "no second-derivative fit: beta = {:.6e}, R^2 = {:.6}",
            report.beta, report.r2
        ),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// run-experiment
// ---------------------------------------------------------------------------

pub fn cmd_run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<()> {
    let result = run_experiment(config)?;
    ensure_dir(out_dir)?;
    write_json(&out_dir.join("experiment.json"), &result)?;
    write_file(
        &out_dir.join("experiment.csv"),
        experiment_csv(&result).as_bytes(),
    )?;
    for row in &result.rows {
        let mse = row
            .test_mse
            .map(|m| m.to_string())
            .unwrap_or_else(|| "failed".into());
        println!("{:<12} test MSE {}", row.model, mse);
    }
    Ok(())
}

fn experiment_csv(result: &ExperimentResult) -> String {
    let mut csv = String::from("model,order,test_mse,learned_coefficients\n");
    for row in &result.rows {
        let order = row.order.map(|o| o.to_string()).unwrap_or_default();
        let mse = row
            .test_mse
            .map(|m| m.to_string())
            .unwrap_or_default();
        let coeffs = row
            .learned_coefficients
            .as_ref()
            .map(|c| {
                c.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(";")
            })
            .unwrap_or_default();
        csv.push_str(&format!("{},{order},{mse},{coeffs}\n", row.model));
    }
    csv
}
