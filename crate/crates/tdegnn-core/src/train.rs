//! Losses, per-group Adam optimization, and the shared training loop.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{ForecastDataset, ForecastSample, NodeDataset};
use crate::error::{Error, Result};
use crate::graph::{normalized_laplacian, SparseOperator};
use crate::models::{DropoutRng, ParamGroup, StationaryModel, TemporalModel};
use crate::rng::RootRng;
use crate::tensor::{Tape, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Per-group learning rates and weight decays plus the loop controls.
/// Ranges follow the hyperparameter table; `validate` names the offending
/// field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr_embed: f64,
    pub lr_temporal: f64,
    pub lr_spatial: f64,
    pub wd_embed: f64,
    pub wd_temporal: f64,
    pub wd_spatial: f64,
    pub dropout_input_output: f64,
    pub dropout_hidden: f64,
    pub epochs: usize,
    pub seed: u64,
    pub grad_clip: Option<f64>,
    pub batchnorm: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_embed: 1e-2,
            lr_temporal: 1e-2,
            lr_spatial: 1e-2,
            wd_embed: 0.0,
            wd_temporal: 0.0,
            wd_spatial: 0.0,
            dropout_input_output: 0.0,
            dropout_hidden: 0.0,
            epochs: 200,
            seed: 0,
            grad_clip: None,
            batchnorm: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, lr) in [
            ("lr_embed", self.lr_embed),
            ("lr_temporal", self.lr_temporal),
            ("lr_spatial", self.lr_spatial),
        ] {
            if !(1e-4..=1e-1).contains(&lr) {
                return Err(Error::config(
                    name,
                    format!("learning rate must lie in [1e-4, 1e-1], got {lr}"),
                ));
            }
        }
        for (name, wd) in [
            ("wd_embed", self.wd_embed),
            ("wd_temporal", self.wd_temporal),
            ("wd_spatial", self.wd_spatial),
        ] {
            if !(0.0..=1e-2).contains(&wd) {
                return Err(Error::config(
                    name,
                    format!("weight decay must lie in [0, 1e-2], got {wd}"),
                ));
            }
        }
        for (name, p) in [
            ("dropout_input_output", self.dropout_input_output),
            ("dropout_hidden", self.dropout_hidden),
        ] {
            if !(0.0..=0.9).contains(&p) {
                return Err(Error::config(
                    name,
                    format!("dropout must lie in [0, 0.9], got {p}"),
                ));
            }
        }
        if let Some(clip) = self.grad_clip {
            if clip <= 0.0 || !clip.is_finite() {
                return Err(Error::config("grad_clip", "must be positive when set"));
            }
        }
        Ok(())
    }

    fn group(&self, group: ParamGroup) -> (f64, f64) {
        match group {
            ParamGroup::Embedding => (self.lr_embed, self.wd_embed),
            ParamGroup::Temporal => (self.lr_temporal, self.wd_temporal),
            ParamGroup::Spatial => (self.lr_spatial, self.wd_spatial),
        }
    }
}

/// Hidden widths allowed by training configurations.
pub fn validate_hidden_dim(hidden: usize) -> Result<()> {
    const ALLOWED: [usize; 6] = [8, 16, 32, 64, 128, 256];
    if ALLOWED.contains(&hidden) {
        Ok(())
    } else {
        Err(Error::config(
            "hidden",
            format!("hidden channels must be one of {ALLOWED:?}, got {hidden}"),
        ))
    }
}

/// Step-size range allowed by training configurations.
pub fn validate_train_step_size(step: f64) -> Result<()> {
    if (1e-3..=1.0).contains(&step) {
        Ok(())
    } else {
        Err(Error::config(
            "step_size",
            format!("step size must lie in [1e-3, 1], got {step}"),
        ))
    }
}

struct Slot {
    name: String,
    tensor: Tensor,
    group: ParamGroup,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

/// Adam with bias correction and decoupled per-group weight decay.
pub struct Optimizer {
    slots: Vec<Slot>,
    config: TrainConfig,
    step_count: u64,
}

impl Optimizer {
    /// Every learnable tensor must appear exactly once; duplicates and
    /// non-learnable tensors are construction errors.
    pub fn new(
        params: Vec<(String, Tensor, ParamGroup)>,
        config: &TrainConfig,
    ) -> Result<Optimizer> {
        config.validate()?;
        if params.is_empty() {
            return Err(Error::config("params", "optimizer received no parameters"));
        }
        for (i, (name, tensor, _)) in params.iter().enumerate() {
            if !tensor.requires_grad() {
                return Err(Error::config(
                    "params",
                    format!("parameter '{name}' does not require gradients"),
                ));
            }
            for (other_name, other, _) in params.iter().skip(i + 1) {
                if tensor.ptr_eq(other) {
                    return Err(Error::config(
                        "params",
                        format!("parameters '{name}' and '{other_name}' share one tensor"),
                    ));
                }
            }
        }
        let slots = params
            .into_iter()
            .map(|(name, tensor, group)| {
                let n = tensor.numel();
                Slot {
                    name,
                    tensor,
                    group,
                    first_moment: vec![0.0; n],
                    second_moment: vec![0.0; n],
                }
            })
            .collect();
        Ok(Optimizer {
            slots,
            config: config.clone(),
            step_count: 0,
        })
    }

    pub fn zero_grads(&self) {
        for slot in &self.slots {
            slot.tensor.zero_grad();
        }
    }

    /// One Adam update over every slot. Parameters never reached by backward
    /// receive the weight-decay part only.
    pub fn step(&mut self) -> Result<()> {
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - ADAM_BETA1.powi(t);
        let bias2 = 1.0 - ADAM_BETA2.powi(t);

        let mut grads: Vec<Vec<f64>> = Vec::with_capacity(self.slots.len());
        for slot in &self.slots {
            let g = slot
                .tensor
                .grad()
                .unwrap_or_else(|| vec![0.0; slot.tensor.numel()]);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    param: slot.name.clone(),
                    epoch: None,
                });
            }
            grads.push(g);
        }
        let clip_scale = match self.config.grad_clip {
            Some(clip) => {
                let norm: f64 = grads
                    .iter()
                    .flat_map(|g| g.iter())
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
                if norm > clip {
                    clip / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };

        for (slot, grad) in self.slots.iter_mut().zip(grads) {
            let (lr, wd) = self.config.group(slot.group);
            let mut values = slot.tensor.to_vec();
            for i in 0..values.len() {
                let g = grad[i] * clip_scale;
                slot.first_moment[i] = ADAM_BETA1 * slot.first_moment[i] + (1.0 - ADAM_BETA1) * g;
                slot.second_moment[i] =
                    ADAM_BETA2 * slot.second_moment[i] + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = slot.first_moment[i] / bias1;
                let v_hat = slot.second_moment[i] / bias2;
                values[i] -= lr * (m_hat / (v_hat.sqrt() + ADAM_EPSILON) + wd * values[i]);
            }
            slot.tensor.set_data(&values);
        }
        Ok(())
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }
}

/// One row of the metrics history.
#[derive(Debug, Clone, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metric: f64,
    pub test_metric: f64,
    pub wall_ms: f64,
}

/// Result of a training run; the model ends up holding the best-validation
/// parameters.
pub struct TrainOutcome {
    pub history: Vec<EpochMetrics>,
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
}

fn snapshot(params: &[(String, Tensor, ParamGroup)]) -> Vec<Vec<f64>> {
    params.iter().map(|(_, t, _)| t.to_vec()).collect()
}

fn restore(params: &[(String, Tensor, ParamGroup)], snap: &[Vec<f64>]) {
    for ((_, t, _), values) in params.iter().zip(snap) {
        t.set_data(values);
    }
}

/// Argmax accuracy over the masked nodes.
pub fn accuracy(logits: &Tensor, labels: &[usize], mask: &[bool]) -> f64 {
    let (n, k) = logits.dims2().expect("logits are a matrix");
    let data = logits.data();
    let mut hits = 0usize;
    let mut total = 0usize;
    for i in 0..n {
        if !mask[i] {
            continue;
        }
        let row = &data[i * k..(i + 1) * k];
        let argmax = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(j, _)| j)
            .unwrap();
        if argmax == labels[i] {
            hits += 1;
        }
        total += 1;
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

fn with_epoch(err: Error, epoch: usize) -> Error {
    match err {
        Error::Divergence { param, .. } => Error::Divergence {
            param,
            epoch: Some(epoch),
        },
        other => other,
    }
}

/// Full-graph training for node classification: cross-entropy on the train
/// mask, one optimizer step per epoch, best-validation parameters retained.
pub fn train_node_classifier(
    model: &StationaryModel,
    data: &NodeDataset,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    let laplacian = Arc::new(normalized_laplacian(&data.graph));
    let params = model.named_parameters();
    let mut optimizer = Optimizer::new(params.clone(), config)?;
    let mut rng = DropoutRng::new(RootRng::new(config.seed));

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Vec<Vec<f64>>)> = None;
    for epoch in 0..config.epochs {
        let started = Instant::now();
        optimizer.zero_grads();
        let mut tape = Tape::new();
        let logits = model.forward(&mut tape, &laplacian, &data.features, true, &mut rng)?;
        let loss = tape.cross_entropy(&logits, &data.labels, &data.train_mask)?;
        let train_loss = loss.item();
        if !train_loss.is_finite() {
            return Err(Error::Divergence {
                param: "loss".into(),
                epoch: Some(epoch),
            });
        }
        tape.backward(&loss)?;
        optimizer.step().map_err(|e| with_epoch(e, epoch))?;

        let mut eval_tape = Tape::new();
        let logits = model.forward(&mut eval_tape, &laplacian, &data.features, false, &mut rng)?;
        let val_loss = eval_tape
            .cross_entropy(&logits, &data.labels, &data.val_mask)?
            .item();
        let val_metric = accuracy(&logits, &data.labels, &data.val_mask);
        let test_metric = accuracy(&logits, &data.labels, &data.test_mask);

        if best.as_ref().is_none_or(|(_, b, _)| val_loss < *b) {
            best = Some((epoch, val_loss, snapshot(&params)));
        }
        history.push(EpochMetrics {
            epoch,
            train_loss,
            val_loss,
            val_metric,
            test_metric,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }

    let (best_epoch, best_val_loss) = match best {
        Some((epoch, loss, snap)) => {
            restore(&params, &snap);
            (Some(epoch), loss)
        }
        None => (None, f64::INFINITY),
    };
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_val_loss,
    })
}

/// Mean over windows of the per-window MSE, at inference settings.
pub fn forecast_mse(
    model: &TemporalModel,
    laplacian: &Arc<SparseOperator>,
    windows: &[ForecastSample],
    rng: &mut DropoutRng,
) -> Result<f64> {
    if windows.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for sample in windows {
        let mut tape = Tape::new();
        let pred = model.forward(&mut tape, laplacian, &sample.frames, &sample.times, false, rng)?;
        total += tape.mse_loss(&pred, &sample.target)?.item();
    }
    Ok(total / windows.len() as f64)
}

/// Full-batch forecaster training: gradients accumulate over every training
/// window (each scaled by 1/N), one optimizer step per epoch,
/// best-validation parameters retained.
pub fn train_forecaster(
    model: &TemporalModel,
    data: &ForecastDataset,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.train.is_empty() {
        return Err(Error::config("split", "no training windows"));
    }
    let laplacian = Arc::new(normalized_laplacian(&data.graph));
    let params = model.named_parameters();
    let mut optimizer = Optimizer::new(params.clone(), config)?;
    let mut rng = DropoutRng::new(RootRng::new(config.seed));

    let inv_count = 1.0 / data.train.len() as f64;
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Vec<Vec<f64>>)> = None;
    for epoch in 0..config.epochs {
        let started = Instant::now();
        optimizer.zero_grads();
        let mut train_loss = 0.0;
        for sample in &data.train {
            let mut tape = Tape::new();
            let pred = model.forward(
                &mut tape,
                &laplacian,
                &sample.frames,
                &sample.times,
                true,
                &mut rng,
            )?;
            let loss = tape.mse_loss(&pred, &sample.target)?;
            train_loss += loss.item() * inv_count;
            let scaled = tape.scale(&loss, inv_count);
            tape.backward(&scaled)?;
        }
        if !train_loss.is_finite() {
            return Err(Error::Divergence {
                param: "loss".into(),
                epoch: Some(epoch),
            });
        }
        optimizer.step().map_err(|e| with_epoch(e, epoch))?;

        let val_loss = forecast_mse(model, &laplacian, &data.val, &mut rng)?;
        let test_metric = forecast_mse(model, &laplacian, &data.test, &mut rng)?;
        if best.as_ref().is_none_or(|(_, b, _)| val_loss < *b) {
            best = Some((epoch, val_loss, snapshot(&params)));
        }
        history.push(EpochMetrics {
            epoch,
            train_loss,
            val_loss,
            val_metric: val_loss,
            test_metric,
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
    }

    let (best_epoch, best_val_loss) = match best {
        Some((epoch, loss, snap)) => {
            restore(&params, &snap);
            (Some(epoch), loss)
        }
        None => (None, f64::INFINITY),
    };
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_val_loss,
    })
}
