//! Nonlinear pendulum: leapfrog ground-truth generation, forecasting dataset
//! construction, the naive repeat-last-frame baseline, and the multi-order
//! comparison experiment.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{window_series, ForecastDataset, ForecastSample};
use crate::error::{Error, Result};
use crate::graph::{normalized_laplacian, Graph};
use crate::models::{DropoutRng, TemporalConfig, TemporalModel, TemporalVariant};
use crate::rng::RootRng;
use crate::tensor::Tensor;
use crate::train::{forecast_mse, train_forecaster, TrainConfig};

/// Time-varying-frequency pendulum `theta'' = sign * sin(omega(t) theta)`
/// with `omega(t) = base_freq - modulation * sin(t)`. The default sign -1
/// gives bounded oscillation around 0; +1 is the literal unstable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendulumConfig {
    pub theta0: f64,
    pub angular_velocity0: f64,
    pub dt: f64,
    pub steps: usize,
    pub base_freq: f64,
    pub modulation: f64,
    pub forcing_sign: f64,
    pub length: f64,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        PendulumConfig {
            theta0: 1.0,
            angular_velocity0: 0.0,
            dt: 0.1,
            steps: 500,
            base_freq: 1.0,
            modulation: 0.04,
            forcing_sign: -1.0,
            length: 1.0,
        }
    }
}

impl PendulumConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dt <= 0.0 || !self.dt.is_finite() {
            return Err(Error::config("dt", format!("must be positive, got {}", self.dt)));
        }
        if self.steps < 2 {
            return Err(Error::config("steps", "need at least 2 steps"));
        }
        if !(0.0..1.0).contains(&self.modulation) {
            return Err(Error::config(
                "modulation",
                format!("must lie in [0, 1), got {}", self.modulation),
            ));
        }
        if self.forcing_sign != 1.0 && self.forcing_sign != -1.0 {
            return Err(Error::config(
                "forcing_sign",
                format!("must be +1 or -1, got {}", self.forcing_sign),
            ));
        }
        if self.length <= 0.0 {
            return Err(Error::config("length", "must be positive"));
        }
        Ok(())
    }

    fn forcing(&self, theta: f64, t: f64) -> f64 {
        let omega = self.base_freq - self.modulation * t.sin();
        self.forcing_sign * (omega * theta).sin()
    }
}

/// Simulated states: node 0 is pinned at the origin, node 1 swings at
/// distance `length`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub angles: Vec<f64>,
    pub angular_velocities: Vec<f64>,
    /// Cartesian position of the swinging node per step.
    pub positions: Vec<(f64, f64)>,
    pub length: f64,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.times.len()
    }
}

/// Leapfrog (kick-drift-kick) integration of the pendulum from `t = 0`.
pub fn simulate(config: &PendulumConfig) -> Result<Trajectory> {
    config.validate()?;
    let mut theta = config.theta0;
    let mut velocity = config.angular_velocity0;
    let half = 0.5 * config.dt;

    let mut times = Vec::with_capacity(config.steps);
    let mut angles = Vec::with_capacity(config.steps);
    let mut velocities = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let t = step as f64 * config.dt;
        times.push(t);
        angles.push(theta);
        velocities.push(velocity);
        if step + 1 == config.steps {
            break;
        }
        let v_half = velocity + half * config.forcing(theta, t);
        theta += config.dt * v_half;
        velocity = v_half + half * config.forcing(theta, t + config.dt);
    }
    let positions = angles
        .iter()
        .map(|a| (config.length * a.sin(), -config.length * a.cos()))
        .collect();
    Ok(Trajectory {
        times,
        angles,
        angular_velocities: velocities,
        positions,
        length: config.length,
    })
}

/// The two-node pendulum graph (pivot and bob, one edge).
pub fn pendulum_graph() -> Graph {
    Graph::new(2, &[(0, 1)]).expect("static two-node graph")
}

/// Windowed forecasting dataset over the Cartesian node positions:
/// per step, node 0 carries (0, 0) and node 1 carries (x1, y1).
pub fn make_dataset(
    trajectory: &Trajectory,
    frames: usize,
    horizon: usize,
    split: (f64, f64, f64),
) -> Result<ForecastDataset> {
    let per_step: Vec<Vec<f64>> = trajectory
        .positions
        .iter()
        .map(|(x, y)| vec![0.0, 0.0, *x, *y])
        .collect();
    let [train, val, test] = window_series(
        &per_step,
        &trajectory.times,
        2,
        2,
        frames,
        horizon,
        split,
    )?;
    Ok(ForecastDataset {
        graph: pendulum_graph(),
        input_dim: 2,
        frames,
        horizon,
        train,
        val,
        test,
    })
}

/// Repeat the newest observed frame for every horizon step.
pub fn naive_predict(sample: &ForecastSample, input_dim: usize, horizon: usize) -> Tensor {
    let (n, width) = sample.frames.dims2().expect("frames are a matrix");
    let src = sample.frames.data();
    let mut out = Vec::with_capacity(n * horizon * input_dim);
    for node in 0..n {
        let last = &src[node * width + width - input_dim..(node + 1) * width];
        for _ in 0..horizon {
            out.extend_from_slice(last);
        }
    }
    drop(src);
    Tensor::from_vec(&[n, horizon * input_dim], out).expect("naive prediction shape")
}

/// Mean over windows of the per-window MSE of the naive baseline.
pub fn naive_mse(windows: &[ForecastSample], input_dim: usize, horizon: usize) -> f64 {
    if windows.is_empty() {
        return f64::NAN;
    }
    let mut total = 0.0;
    for sample in windows {
        let pred = naive_predict(sample, input_dim, horizon);
        let diff: f64 = pred
            .data()
            .iter()
            .zip(sample.target.data().iter())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        total += diff / pred.numel() as f64;
    }
    total / windows.len() as f64
}

/// Everything the order-comparison experiment needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub pendulum: PendulumConfig,
    pub orders: Vec<usize>,
    pub frames: usize,
    pub horizon: usize,
    pub split: (f64, f64, f64),
    pub hidden_dim: usize,
    pub layers: usize,
    pub step_size: f64,
    pub variant: TemporalVariant,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            pendulum: PendulumConfig::default(),
            orders: vec![1, 2],
            frames: 4,
            horizon: 1,
            split: (0.7, 0.15, 0.15),
            hidden_dim: 16,
            layers: 1,
            step_size: 0.1,
            variant: TemporalVariant::Direct,
            train: TrainConfig {
                epochs: 400,
                ..TrainConfig::default()
            },
        }
    }
}

/// One line of the comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRow {
    pub model: String,
    pub order: Option<usize>,
    pub test_mse: Option<f64>,
    /// Layer-averaged learned stencil (direct variant only).
    pub learned_coefficients: Option<Vec<f64>>,
    pub failed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub seed: u64,
    pub rows: Vec<ExperimentRow>,
}

fn average_layers(per_layer: &[Vec<f64>]) -> Vec<f64> {
    let order = per_layer[0].len();
    let mut avg = vec![0.0; order];
    for layer in per_layer {
        for (a, v) in avg.iter_mut().zip(layer) {
            *a += v / per_layer.len() as f64;
        }
    }
    avg
}

/// Train one model per requested order, evaluate test MSE, and include the
/// naive baseline row. A diverging run is marked failed, not fatal.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    let trajectory = simulate(&config.pendulum)?;
    let data = make_dataset(&trajectory, config.frames, config.horizon, config.split)?;
    let laplacian = Arc::new(normalized_laplacian(&data.graph));

    let mut rows = Vec::with_capacity(config.orders.len() + 1);
    rows.push(ExperimentRow {
        model: "naive".into(),
        order: None,
        test_mse: Some(naive_mse(&data.test, data.input_dim, data.horizon)),
        learned_coefficients: None,
        failed: false,
    });

    for &order in &config.orders {
        let model_config = TemporalConfig {
            input_dim: data.input_dim,
            hidden_dim: config.hidden_dim,
            frames: config.frames,
            horizon: config.horizon,
            layers: config.layers,
            order,
            step_size: config.step_size,
            variant: config.variant.clone(),
            dropout_input_output: config.train.dropout_input_output,
            dropout_hidden: config.train.dropout_hidden,
            batchnorm: config.train.batchnorm,
        };
        let model = TemporalModel::new(model_config, &RootRng::new(config.train.seed))?;
        let name = format!("tde-gnn-o{order}");
        match train_forecaster(&model, &data, &config.train) {
            Ok(_outcome) => {
                let mut rng = DropoutRng::new(RootRng::new(config.train.seed));
                let test_mse = forecast_mse(&model, &laplacian, &data.test, &mut rng)?;
                rows.push(ExperimentRow {
                    model: name,
                    order: Some(order),
                    test_mse: Some(test_mse),
                    learned_coefficients: model
                        .static_coefficients()
                        .map(|layers| average_layers(&layers)),
                    failed: false,
                });
            }
            Err(Error::Divergence { .. }) => {
                rows.push(ExperimentRow {
                    model: name,
                    order: Some(order),
                    test_mse: None,
                    learned_coefficients: None,
                    failed: true,
                });
            }
            Err(other) => return Err(other),
        }
    }
    Ok(ExperimentResult {
        seed: config.train.seed,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_initial_state_stays_at_rest() {
        let cfg = PendulumConfig {
            theta0: 0.0,
            angular_velocity0: 0.0,
            steps: 200,
            ..PendulumConfig::default()
        };
        let traj = simulate(&cfg).unwrap();
        assert!(traj.angles.iter().all(|a| *a == 0.0));
    }

    #[test]
    fn near_linear_regime_has_period_two_pi() {
        let cfg = PendulumConfig {
            theta0: 0.1,
            modulation: 0.0,
            dt: 0.01,
            steps: 7000, // > 10 periods
            ..PendulumConfig::default()
        };
        let traj = simulate(&cfg).unwrap();
        // Times of upward zero crossings, linearly interpolated.
        let mut crossings = Vec::new();
        for i in 1..traj.steps() {
            let (a0, a1) = (traj.angles[i - 1], traj.angles[i]);
            if a0 < 0.0 && a1 >= 0.0 {
                let frac = -a0 / (a1 - a0);
                crossings.push(traj.times[i - 1] + frac * cfg.dt);
            }
        }
        assert!(crossings.len() >= 10, "need 10 periods, got {}", crossings.len());
        let periods = crossings.len() - 1;
        let mean_period = (crossings[periods] - crossings[0]) / periods as f64;
        let two_pi = 2.0 * std::f64::consts::PI;
        assert!(
            (mean_period - two_pi).abs() / two_pi < 0.02,
            "period {mean_period} vs {two_pi}"
        );
    }

    #[test]
    fn autonomous_energy_drift_is_small() {
        let cfg = PendulumConfig {
            theta0: 1.0,
            modulation: 0.0,
            dt: 0.01,
            steps: 10_001,
            ..PendulumConfig::default()
        };
        let traj = simulate(&cfg).unwrap();
        let energy = |v: f64, theta: f64| 0.5 * v * v + (1.0 - theta.cos());
        let e0 = energy(traj.angular_velocities[0], traj.angles[0]);
        let max_drift = traj
            .angular_velocities
            .iter()
            .zip(&traj.angles)
            .map(|(v, a)| (energy(*v, *a) - e0).abs() / e0)
            .fold(0.0_f64, f64::max);
        assert!(max_drift < 0.01, "energy drift {max_drift}");
    }

    #[test]
    fn leapfrog_is_time_reversible_on_the_autonomous_system() {
        let forward_cfg = PendulumConfig {
            theta0: 1.0,
            modulation: 0.0,
            dt: 0.01,
            steps: 1001,
            ..PendulumConfig::default()
        };
        let traj = simulate(&forward_cfg).unwrap();
        let back_cfg = PendulumConfig {
            theta0: *traj.angles.last().unwrap(),
            angular_velocity0: -traj.angular_velocities.last().unwrap(),
            ..forward_cfg
        };
        let back = simulate(&back_cfg).unwrap();
        assert_abs_diff_eq!(*back.angles.last().unwrap(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn rigid_rod_invariant() {
        let traj = simulate(&PendulumConfig::default()).unwrap();
        for (x, y) in &traj.positions {
            assert_abs_diff_eq!((x * x + y * y).sqrt(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dataset_counts_and_shapes() {
        let cfg = PendulumConfig {
            steps: 10,
            ..PendulumConfig::default()
        };
        let traj = simulate(&cfg).unwrap();
        let data = make_dataset(&traj, 4, 1, (1.0, 0.0, 0.0)).unwrap();
        assert_eq!(data.train.len(), 6);
        assert_eq!(data.train[0].frames.shape(), &[2, 8]);
        assert_eq!(data.train[0].target.shape(), &[2, 2]);
    }

    #[test]
    fn naive_prediction_repeats_last_frame() {
        let traj = simulate(&PendulumConfig::default()).unwrap();
        let data = make_dataset(&traj, 4, 2, (1.0, 0.0, 0.0)).unwrap();
        let sample = &data.train[0];
        let pred = naive_predict(sample, 2, 2);
        let frames = sample.frames.to_vec();
        let out = pred.to_vec();
        // Node 1's last frame occupies columns 6..8 of its row.
        assert_eq!(out[4..6], frames[14..16]);
        assert_eq!(out[6..8], frames[14..16]);
    }

    #[test]
    fn naive_mse_zero_on_constant_trajectory() {
        let cfg = PendulumConfig {
            theta0: 0.0,
            steps: 20,
            ..PendulumConfig::default()
        };
        let traj = simulate(&cfg).unwrap();
        let data = make_dataset(&traj, 4, 1, (1.0, 0.0, 0.0)).unwrap();
        assert_eq!(naive_mse(&data.train, 2, 1), 0.0);
    }

    #[test]
    fn naive_mse_closed_form_on_linear_signal() {
        // Linear-in-time signal with slope s: repeating the last frame is off
        // by exactly s*dt per coordinate, so the MSE is (s*dt)^2... averaged
        // with the pinned node's zero error, divided by the entry count.
        let slope = 0.35;
        let dt = 0.1;
        let per_step: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let v = slope * dt * i as f64;
                vec![0.0, 0.0, v, v]
            })
            .collect();
        let times: Vec<f64> = (0..12).map(|i| dt * i as f64).collect();
        let [train, _, _] =
            crate::data::window_series(&per_step, &times, 2, 2, 3, 1, (1.0, 0.0, 0.0)).unwrap();
        let mse = naive_mse(&train, 2, 1);
        // Node 1 contributes (slope*dt)^2 on both coordinates, node 0 zero;
        // mean over 4 entries = (slope*dt)^2 / 2.
        assert_abs_diff_eq!(mse, (slope * dt).powi(2) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn naive_baseline_floor_is_positive_on_real_trajectory() {
        let traj = simulate(&PendulumConfig::default()).unwrap();
        let data = make_dataset(&traj, 4, 1, (0.7, 0.15, 0.15)).unwrap();
        assert!(naive_mse(&data.test, 2, 1) > 0.0);
    }

    #[test]
    fn experiment_plumbing_with_zero_epochs() {
        let config = ExperimentConfig {
            orders: vec![2],
            pendulum: PendulumConfig {
                steps: 40,
                ..PendulumConfig::default()
            },
            train: TrainConfig {
                epochs: 0,
                ..TrainConfig::default()
            },
            ..ExperimentConfig::default()
        };
        let result = run_experiment(&config).unwrap();
        assert_eq!(result.rows.len(), 2);
        assert_eq!(result.rows[0].model, "naive");
        let row = &result.rows[1];
        assert_eq!(row.order, Some(2));
        assert!(row.test_mse.unwrap().is_finite());
        assert_eq!(row.learned_coefficients.as_ref().unwrap().len(), 2);
    }
}
