//! Layer building blocks: the diffusion + channel-mixing spatial term, the
//! multistep temporal update, and sinusoidal time embeddings.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::SparseOperator;
use crate::rng::RngStream;
use crate::temporal::{CoefficientVector, HistoryBuffer};
use crate::tensor::{Tape, Tensor};

/// `relu((F - h L F) W)`: graph diffusion followed by channel mixing.
/// `W` is applied without bias. All layers of a model share one Laplacian,
/// supplied at application time. `h = 0` is allowed and freezes the dynamics;
/// training configurations restrict it to the tighter range `[1e-3, 1]`.
pub struct SpatialTerm {
    weight: Tensor,
    step: f64,
}

impl SpatialTerm {
    pub fn new(feature_dim: usize, step: f64, rng: &mut RngStream) -> Result<SpatialTerm> {
        if !(0.0..=1.0).contains(&step) {
            return Err(Error::config(
                "step_size",
                format!("must lie in [0, 1], got {step}"),
            ));
        }
        let mut data = vec![0.0; feature_dim * feature_dim];
        rng.fill_uniform_centered(&mut data, 1.0 / (feature_dim as f64).sqrt());
        Ok(SpatialTerm {
            weight: Tensor::param(&[feature_dim, feature_dim], data)?,
            step,
        })
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn apply(
        &self,
        tape: &mut Tape,
        operator: &Arc<SparseOperator>,
        features: &Tensor,
    ) -> Result<Tensor> {
        let diffused = tape.spmv(operator, features)?;
        let scaled = tape.scale(&diffused, self.step);
        let smoothed = tape.sub(features, &scaled)?;
        let mixed = tape.matmul(&smoothed, &self.weight)?;
        Ok(tape.relu(&mixed))
    }
}

/// One multistep update: `F(l+1) = sum_p c_p F(l-p+1) + h * s_out`,
/// with `c_1` weighting the newest state in the window.
pub fn tde_step(
    tape: &mut Tape,
    history: &HistoryBuffer,
    coeffs: &CoefficientVector,
    spatial_out: &Tensor,
    step: f64,
) -> Result<Tensor> {
    let window = history.window()?;
    if coeffs.order() != window.len() {
        return Err(Error::Shape {
            op: "tde_step",
            lhs: vec![coeffs.order()],
            rhs: vec![window.len()],
        });
    }
    if spatial_out.shape() != window[0].shape() {
        return Err(Error::Shape {
            op: "tde_step",
            lhs: spatial_out.shape().to_vec(),
            rhs: window[0].shape().to_vec(),
        });
    }
    let mut acc: Option<Tensor> = None;
    for (p, state) in window.iter().enumerate() {
        let cp = tape.element(coeffs.tensor(), p)?;
        let term = tape.mul_scalar(state, &cp)?;
        acc = Some(match acc {
            Some(prev) => tape.add(&prev, &term)?,
            None => term,
        });
    }
    let forcing = tape.scale(spatial_out, step);
    tape.add(&acc.expect("order >= 1"), &forcing)
}

/// Number of sinusoid frequencies per frame.
pub const TIME_EMBED_FREQUENCIES: usize = 10;
/// Per-frame embedding width: sines then cosines.
pub const TIME_EMBED_WIDTH: usize = 2 * TIME_EMBED_FREQUENCIES;

/// Frequency ladder `2*pi / 10000^(j/10)` for `j` in `0..10`.
fn frequency(j: usize) -> f64 {
    2.0 * PI / 10_000f64.powf(j as f64 / TIME_EMBED_FREQUENCIES as f64)
}

/// Sinusoidal embedding of the frame times, one identical row per node:
/// for each frame `[sin(v_0 t), ..., sin(v_9 t), cos(v_0 t), ..., cos(v_9 t)]`.
/// Constant with respect to learning (no gradient).
pub fn time_embedding(times: &[f64], node_count: usize) -> Tensor {
    let frames = times.len();
    let width = frames * TIME_EMBED_WIDTH;
    let mut row = Vec::with_capacity(width);
    for &t in times {
        for j in 0..TIME_EMBED_FREQUENCIES {
            row.push((frequency(j) * t).sin());
        }
        for j in 0..TIME_EMBED_FREQUENCIES {
            row.push((frequency(j) * t).cos());
        }
    }
    let mut data = Vec::with_capacity(node_count * width);
    for _ in 0..node_count {
        data.extend_from_slice(&row);
    }
    Tensor::from_vec(&[node_count, width], data).expect("time embedding shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalized_laplacian, Graph};
    use crate::rng::RootRng;
    use crate::temporal::DirectTemporal;
    use approx::assert_abs_diff_eq;

    fn operator(n: usize, edges: &[(usize, usize)]) -> Arc<SparseOperator> {
        Arc::new(normalized_laplacian(&Graph::new(n, edges).unwrap()))
    }

    fn coeffs(values: &[f64]) -> CoefficientVector {
        let direct = DirectTemporal::new(values.len()).unwrap();
        direct.raw().set_data(values);
        direct.coefficients(&mut Tape::new()).unwrap()
    }

    #[test]
    fn spatial_term_of_zero_is_zero() {
        let mut rng = RootRng::new(0).stream("w");
        let st = SpatialTerm::new(3, 0.5, &mut rng).unwrap();
        let f = Tensor::zeros(&[4, 3]);
        let out = st
            .apply(&mut Tape::new(), &operator(4, &[(0, 1), (2, 3)]), &f)
            .unwrap();
        assert!(out.to_vec().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn edgeless_graph_with_identity_weight_passes_nonnegative_features() {
        let mut rng = RootRng::new(0).stream("w");
        let st = SpatialTerm::new(2, 1.0, &mut rng).unwrap();
        st.weight().set_data(&[1.0, 0.0, 0.0, 1.0]);
        let f = Tensor::matrix(3, 2, vec![0.5, 0.0, 1.5, 2.0, 0.0, 3.0]).unwrap();
        let out = st.apply(&mut Tape::new(), &operator(3, &[]), &f).unwrap();
        assert_eq!(out.to_vec(), f.to_vec());
    }

    #[test]
    fn two_node_hand_evaluation() {
        // L = [[1,-1],[-1,1]], h = 1, W = I, f = [[1],[0]]:
        // relu(f - L f) = relu([[1],[0]] - [[1],[-1]]) = [[0],[1]].
        let mut rng = RootRng::new(0).stream("w");
        let st = SpatialTerm::new(1, 1.0, &mut rng).unwrap();
        st.weight().set_data(&[1.0]);
        let f = Tensor::matrix(2, 1, vec![1.0, 0.0]).unwrap();
        let out = st
            .apply(&mut Tape::new(), &operator(2, &[(0, 1)]), &f)
            .unwrap();
        assert_eq!(out.to_vec(), vec![0.0, 1.0]);
    }

    #[test]
    fn step_size_bounds_enforced() {
        let mut rng = RootRng::new(0).stream("w");
        assert!(SpatialTerm::new(2, -0.1, &mut rng).is_err());
        assert!(SpatialTerm::new(2, 1.5, &mut rng).is_err());
        assert!(SpatialTerm::new(2, 0.0, &mut rng).is_ok());
    }

    #[test]
    fn order_one_identity_dynamics() {
        let mut buf = HistoryBuffer::new(1).unwrap();
        let state = Tensor::matrix(2, 2, vec![1.0, -2.0, 3.0, 0.25]).unwrap();
        buf.push(state.clone()).unwrap();
        let zero = Tensor::zeros(&[2, 2]);
        let out = tde_step(&mut Tape::new(), &buf, &coeffs(&[1.0]), &zero, 0.7).unwrap();
        assert_eq!(out.to_vec(), state.to_vec());
    }

    #[test]
    fn linear_extrapolation_example() {
        // c = [2, -1], F(l) = [[3]], F(l-1) = [[1]] -> [[5]]; with h*s = 0.5 -> [[5.5]].
        let mut buf = HistoryBuffer::new(2).unwrap();
        buf.push(Tensor::matrix(1, 1, vec![1.0]).unwrap()).unwrap();
        buf.push(Tensor::matrix(1, 1, vec![3.0]).unwrap()).unwrap();
        let zero = Tensor::zeros(&[1, 1]);
        let out = tde_step(&mut Tape::new(), &buf, &coeffs(&[2.0, -1.0]), &zero, 1.0).unwrap();
        assert_eq!(out.to_vec(), vec![5.0]);

        let s = Tensor::matrix(1, 1, vec![0.5]).unwrap();
        let out = tde_step(&mut Tape::new(), &buf, &coeffs(&[2.0, -1.0]), &s, 1.0).unwrap();
        assert_eq!(out.to_vec(), vec![5.5]);
    }

    #[test]
    fn second_difference_reduction_is_exact() {
        let mut buf = HistoryBuffer::new(2).unwrap();
        let older = vec![0.25, -1.5, 2.0, 0.125];
        let newer = vec![1.0, 0.5, -0.75, 3.0];
        buf.push(Tensor::matrix(2, 2, older.clone()).unwrap()).unwrap();
        buf.push(Tensor::matrix(2, 2, newer.clone()).unwrap()).unwrap();
        let zero = Tensor::zeros(&[2, 2]);
        let out = tde_step(&mut Tape::new(), &buf, &coeffs(&[2.0, -1.0]), &zero, 1.0).unwrap();
        for ((got, new), old) in out.to_vec().iter().zip(&newer).zip(&older) {
            assert_eq!(*got, 2.0 * new - old);
        }
    }

    #[test]
    fn cold_buffer_is_a_state_error() {
        let buf = HistoryBuffer::new(2).unwrap();
        let zero = Tensor::zeros(&[1, 1]);
        assert!(matches!(
            tde_step(&mut Tape::new(), &buf, &coeffs(&[2.0, -1.0]), &zero, 1.0),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn linearity_in_history() {
        let (alpha, beta) = (0.75, -1.25);
        let mut rng = RootRng::new(2).stream("lin");
        let h1: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let h2: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let c = coeffs(&[1.4, 0.2, -0.6]);
        let zero = Tensor::zeros(&[2, 2]);

        let run = |frames: &[Vec<f64>]| -> Vec<f64> {
            let mut buf = HistoryBuffer::new(3).unwrap();
            for f in frames {
                buf.push(Tensor::matrix(2, 2, f.clone()).unwrap()).unwrap();
            }
            tde_step(&mut Tape::new(), &buf, &c, &zero, 1.0)
                .unwrap()
                .to_vec()
        };
        let combined: Vec<Vec<f64>> = h1
            .iter()
            .zip(&h2)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| alpha * x + beta * y).collect())
            .collect();
        let lhs = run(&combined);
        let ra = run(&h1);
        let rb = run(&h2);
        for i in 0..lhs.len() {
            assert_abs_diff_eq!(lhs[i], alpha * ra[i] + beta * rb[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn time_embedding_at_zero() {
        let emb = time_embedding(&[0.0], 3);
        assert_eq!(emb.shape(), &[3, TIME_EMBED_WIDTH]);
        let data = emb.to_vec();
        for node in 0..3 {
            let row = &data[node * TIME_EMBED_WIDTH..(node + 1) * TIME_EMBED_WIDTH];
            assert_eq!(&row[..10], &[0.0; 10]);
            assert_eq!(&row[10..], &[1.0; 10]);
        }
    }

    #[test]
    fn time_embedding_width_contract() {
        for frames in 1..5 {
            let times: Vec<f64> = (0..frames).map(|i| i as f64 * 0.37).collect();
            let emb = time_embedding(&times, 2);
            assert_eq!(emb.shape(), &[2, frames * TIME_EMBED_WIDTH]);
        }
    }

    #[test]
    fn first_frequency_has_unit_period() {
        let emb = time_embedding(&[1.0], 1);
        let data = emb.to_vec();
        assert_abs_diff_eq!(data[0], 0.0, epsilon = 1e-12); // sin(2 pi)
        assert_abs_diff_eq!(data[10], 1.0, epsilon = 1e-12); // cos(2 pi)
    }
}
