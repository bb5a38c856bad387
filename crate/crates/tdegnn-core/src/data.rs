//! Dataset containers, sliding-window construction for forecasting, and a
//! synthetic two-community classification task.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::RootRng;
use crate::tensor::Tensor;

/// A node-classification dataset: one graph, one feature matrix, integer
/// labels, and boolean split masks.
pub struct NodeDataset {
    pub graph: Graph,
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub train_mask: Vec<bool>,
    pub val_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
}

/// One forecasting window: `r` observed frames (column blocks, oldest first),
/// their absolute times, and `a` future frames as the target.
pub struct ForecastSample {
    pub frames: Tensor,
    pub times: Vec<f64>,
    pub target: Tensor,
}

/// Windowed forecasting dataset with a contiguous-in-time split.
pub struct ForecastDataset {
    pub graph: Graph,
    pub input_dim: usize,
    pub frames: usize,
    pub horizon: usize,
    pub train: Vec<ForecastSample>,
    pub val: Vec<ForecastSample>,
    pub test: Vec<ForecastSample>,
}

impl ForecastDataset {
    pub fn split_sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.val.len(), self.test.len())
    }
}

/// Slide an `(r frames in, a frames out)` window over a uniformly sampled
/// node-feature series. `per_step` holds one `n*k` row-major buffer per time
/// step. The split is contiguous: the earliest windows train, the latest test,
/// so no test information leaks backwards.
#[allow(clippy::too_many_arguments)]
pub fn window_series(
    per_step: &[Vec<f64>],
    times: &[f64],
    node_count: usize,
    input_dim: usize,
    frames: usize,
    horizon: usize,
    split: (f64, f64, f64),
) -> Result<[Vec<ForecastSample>; 3]> {
    let steps = per_step.len();
    if times.len() != steps {
        return Err(Error::Shape {
            op: "window_series",
            lhs: vec![steps],
            rhs: vec![times.len()],
        });
    }
    if frames == 0 || horizon == 0 {
        return Err(Error::config("frames/horizon", "must be >= 1"));
    }
    if frames + horizon > steps {
        return Err(Error::config(
            "steps",
            format!("need at least r + a = {} steps, got {steps}", frames + horizon),
        ));
    }
    let (ftr, fva, fte) = split;
    if ftr < 0.0 || fva < 0.0 || fte < 0.0 || (ftr + fva + fte - 1.0).abs() > 1e-9 {
        return Err(Error::config(
            "split",
            format!("fractions must be nonnegative and sum to 1, got {split:?}"),
        ));
    }
    for buf in per_step {
        if buf.len() != node_count * input_dim {
            return Err(Error::Shape {
                op: "window_series",
                lhs: vec![node_count, input_dim],
                rhs: vec![buf.len()],
            });
        }
    }

    let count = steps - frames - horizon + 1;
    let mut windows = Vec::with_capacity(count);
    for w in 0..count {
        let frame_block = |range: std::ops::Range<usize>| -> Vec<f64> {
            let width = range.len() * input_dim;
            let mut data = vec![0.0; node_count * width];
            for (j, step) in range.clone().enumerate() {
                let src = &per_step[step];
                for node in 0..node_count {
                    data[node * width + j * input_dim..node * width + (j + 1) * input_dim]
                        .copy_from_slice(&src[node * input_dim..(node + 1) * input_dim]);
                }
            }
            data
        };
        let frames_data = frame_block(w..w + frames);
        let target_data = frame_block(w + frames..w + frames + horizon);
        windows.push(ForecastSample {
            frames: Tensor::from_vec(&[node_count, frames * input_dim], frames_data)?,
            times: times[w..w + frames].to_vec(),
            target: Tensor::from_vec(&[node_count, horizon * input_dim], target_data)?,
        });
    }

    let n_train = (count as f64 * ftr).floor() as usize;
    let n_val = (count as f64 * fva).floor() as usize;
    let rest: Vec<ForecastSample> = windows.drain(n_train..).collect();
    let train = windows;
    let mut rest = rest;
    let test = rest.split_off(n_val.min(rest.len()));
    let val = rest;
    Ok([train, val, test])
}

/// Deterministic two-community graph with community-correlated features:
/// a ring inside each community plus sparse random intra/inter edges. Labels
/// are the community ids; splits cycle train/train/val/test inside each side.
pub fn two_community(per_side: usize, feature_dim: usize, seed: u64) -> Result<NodeDataset> {
    if per_side < 4 || feature_dim == 0 {
        return Err(Error::config(
            "two_community",
            "need at least 4 nodes per side and one feature",
        ));
    }
    let n = 2 * per_side;
    let root = RootRng::new(seed);
    let mut topo = root.stream("two-community/edges");
    let mut feat = root.stream("two-community/features");

    let mut edges = Vec::new();
    for side in 0..2 {
        let base = side * per_side;
        for i in 0..per_side {
            edges.push((base + i, base + (i + 1) % per_side));
        }
        for i in 0..per_side {
            for j in (i + 2)..per_side {
                if topo.next_f64() < 0.15 {
                    edges.push((base + i, base + j));
                }
            }
        }
    }
    for i in 0..per_side {
        for j in 0..per_side {
            if topo.next_f64() < 0.02 {
                edges.push((i, per_side + j));
            }
        }
    }
    let graph = Graph::new(n, &edges)?;

    let mut features = vec![0.0; n * feature_dim];
    let mut labels = vec![0usize; n];
    for node in 0..n {
        let community = node / per_side;
        labels[node] = community;
        let center = if community == 0 { 0.75 } else { -0.75 };
        for d in 0..feature_dim {
            features[node * feature_dim + d] = center + feat.uniform(-0.5, 0.5);
        }
    }

    let (mut train_mask, mut val_mask, mut test_mask) =
        (vec![false; n], vec![false; n], vec![false; n]);
    for node in 0..n {
        match node % 4 {
            0 | 1 => train_mask[node] = true,
            2 => val_mask[node] = true,
            _ => test_mask[node] = true,
        }
    }

    Ok(NodeDataset {
        graph,
        features: Tensor::from_vec(&[n, feature_dim], features)?,
        labels,
        num_classes: 2,
        train_mask,
        val_mask,
        test_mask,
    })
}
