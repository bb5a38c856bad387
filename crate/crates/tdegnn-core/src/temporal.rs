//! Feature history and the learned temporal coefficient mechanisms.
//!
//! A layer update combines the `o` most recent feature states with weights
//! `c` that always sum to one, so the learned stencil approximates a finite
//! difference of some temporal order. Two parameterizations are provided:
//! a direct per-layer vector, and attention scores over the history window
//! with the SoftMax removed so coefficients may go negative.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::{Tape, Tensor};

/// Denominators smaller than this abort coefficient normalization.
pub const DEGENERATE_SUM_THRESHOLD: f64 = 1e-8;

/// Ring of the `o` most recent feature matrices, newest first.
#[derive(Clone)]
pub struct HistoryBuffer {
    order: usize,
    entries: Vec<Tensor>, // index 0 = newest
}

impl HistoryBuffer {
    pub fn new(order: usize) -> Result<HistoryBuffer> {
        if order == 0 {
            return Err(Error::config("order", "history order must be >= 1"));
        }
        Ok(HistoryBuffer {
            order,
            entries: Vec::with_capacity(order),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_warm(&self) -> bool {
        self.entries.len() == self.order
    }

    /// Insert `state` as the newest entry, evicting the oldest past capacity.
    pub fn push(&mut self, state: Tensor) -> Result<()> {
        if let Some(first) = self.entries.first() {
            if first.shape() != state.shape() {
                return Err(Error::Shape {
                    op: "history push",
                    lhs: first.shape().to_vec(),
                    rhs: state.shape().to_vec(),
                });
            }
        }
        self.entries.insert(0, state);
        self.entries.truncate(self.order);
        Ok(())
    }

    pub fn newest(&self) -> Option<&Tensor> {
        self.entries.first()
    }

    /// Swap the newest entry (dropout reassigns the working state in place).
    pub fn replace_newest(&mut self, state: Tensor) -> Result<()> {
        match self.entries.first_mut() {
            Some(slot) => {
                if slot.shape() != state.shape() {
                    return Err(Error::Shape {
                        op: "history replace",
                        lhs: slot.shape().to_vec(),
                        rhs: state.shape().to_vec(),
                    });
                }
                *slot = state;
                Ok(())
            }
            None => Err(Error::state("history buffer is empty")),
        }
    }

    /// The full window `[F(l), F(l-1), ..., F(l-o+1)]`. Erroring while cold
    /// keeps warm-up an explicit responsibility of the caller.
    pub fn window(&self) -> Result<&[Tensor]> {
        if !self.is_warm() {
            return Err(Error::state(format!(
                "history buffer cold: holds {} of {} states",
                self.entries.len(),
                self.order
            )));
        }
        Ok(&self.entries)
    }
}

/// A normalized temporal stencil: `o` reals summing to one.
///
/// Holds the differentiable tensor so gradients flow back through the
/// normalization into the producing mechanism.
#[derive(Clone, Debug)]
pub struct CoefficientVector {
    tensor: Tensor,
}

impl CoefficientVector {
    /// Wrap a freshly normalized tensor, verifying the sum-to-one invariant.
    /// The absolute tolerance is 1e-10, scaled up only when the coefficient
    /// magnitudes make that unrepresentable in 64-bit arithmetic.
    pub fn from_tensor(tensor: Tensor) -> Result<CoefficientVector> {
        if tensor.shape().len() != 1 {
            return Err(Error::state(format!(
                "coefficient vector must be rank 1, got {:?}",
                tensor.shape()
            )));
        }
        let values = tensor.to_vec();
        let sum: f64 = values.iter().sum();
        let magnitude: f64 = values.iter().map(|v| v.abs()).sum();
        let tol = 1e-10 * magnitude.max(1.0);
        if (sum - 1.0).abs() > tol {
            return Err(Error::numerical(format!(
                "coefficient vector sums to {sum:.17}, expected 1 within {tol:.3e}"
            )));
        }
        Ok(CoefficientVector { tensor })
    }

    pub fn order(&self) -> usize {
        self.tensor.numel()
    }

    pub fn values(&self) -> Vec<f64> {
        self.tensor.to_vec()
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }
}

/// Per-layer learnable stencil, normalized by its sum at read time (so the
/// constraint survives any optimizer update).
pub struct DirectTemporal {
    raw: Tensor,
}

impl DirectTemporal {
    /// Starts at the forward-Euler stencil `[1, 0, ..., 0]`, i.e. exactly the
    /// first-order baseline; higher order is learned, not imposed.
    pub fn new(order: usize) -> Result<DirectTemporal> {
        if order == 0 {
            return Err(Error::config("order", "temporal order must be >= 1"));
        }
        let mut init = vec![0.0; order];
        init[0] = 1.0;
        Ok(DirectTemporal {
            raw: Tensor::param(&[order], init)?,
        })
    }

    pub fn order(&self) -> usize {
        self.raw.numel()
    }

    /// The unnormalized parameter vector (for the optimizer).
    pub fn raw(&self) -> &Tensor {
        &self.raw
    }

    /// `c = c~ / sum(c~)`, recorded on the tape so gradients reach `c~`.
    pub fn coefficients(&self, tape: &mut Tape) -> Result<CoefficientVector> {
        let sum_value: f64 = self.raw.data().iter().sum();
        if sum_value.abs() < DEGENERATE_SUM_THRESHOLD {
            return Err(Error::DegenerateNormalization {
                sum_abs: sum_value.abs(),
                threshold: DEGENERATE_SUM_THRESHOLD,
            });
        }
        let sum = tape.sum(&self.raw);
        let inv = tape.recip(&sum)?;
        let normalized = tape.mul_scalar(&self.raw, &inv)?;
        CoefficientVector::from_tensor(normalized)
    }
}

/// Multi-head attention over the temporal dimension, SoftMax removed.
///
/// Each history state is mean-pooled over nodes to a width-`k` token; per
/// head the scaled dot-product score map is computed, heads are averaged,
/// and the last row of the `o x o` map is normalized by its sum.
pub struct AttentionTemporal {
    order: usize,
    heads: usize,
    key_dim: usize,
    query_weights: Vec<Tensor>,
    key_weights: Vec<Tensor>,
}

impl AttentionTemporal {
    pub const DEFAULT_HEADS: usize = 4;

    pub fn new(
        order: usize,
        feature_dim: usize,
        heads: usize,
        rng: &mut RngStream,
    ) -> Result<AttentionTemporal> {
        if order == 0 {
            return Err(Error::config("order", "temporal order must be >= 1"));
        }
        if heads == 0 {
            return Err(Error::config("heads", "attention needs >= 1 head"));
        }
        let key_dim = (feature_dim / heads).max(4);
        let scale = 1.0 / (feature_dim as f64).sqrt();
        let mut make = |_: usize| -> Result<Tensor> {
            let mut data = vec![0.0; feature_dim * key_dim];
            rng.fill_uniform_centered(&mut data, scale);
            Tensor::param(&[feature_dim, key_dim], data)
        };
        let query_weights: Vec<Tensor> = (0..heads).map(&mut make).collect::<Result<_>>()?;
        let key_weights: Vec<Tensor> = (0..heads).map(&mut make).collect::<Result<_>>()?;
        Ok(AttentionTemporal {
            order,
            heads,
            key_dim,
            query_weights,
            key_weights,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn key_dim(&self) -> usize {
        self.key_dim
    }

    pub fn parameters(&self) -> Vec<Tensor> {
        self.query_weights
            .iter()
            .chain(self.key_weights.iter())
            .cloned()
            .collect()
    }

    pub fn coefficients(
        &self,
        tape: &mut Tape,
        history: &HistoryBuffer,
    ) -> Result<CoefficientVector> {
        if history.order() != self.order {
            return Err(Error::state(format!(
                "attention order {} does not match buffer order {}",
                self.order,
                history.order()
            )));
        }
        let window = history.window()?;
        let tokens: Vec<Tensor> = window
            .iter()
            .map(|state| tape.mean_rows(state))
            .collect::<Result<_>>()?;
        let token_matrix = tape.stack_rows(&tokens)?;

        let score_scale = 1.0 / (self.key_dim as f64).sqrt();
        let mut combined: Option<Tensor> = None;
        for head in 0..self.heads {
            let queries = tape.matmul(&token_matrix, &self.query_weights[head])?;
            let keys = tape.matmul(&token_matrix, &self.key_weights[head])?;
            let keys_t = tape.transpose(&keys)?;
            let scores = tape.matmul(&queries, &keys_t)?;
            let scores = tape.scale(&scores, score_scale);
            combined = Some(match combined {
                Some(acc) => tape.add(&acc, &scores)?,
                None => scores,
            });
        }
        let score_map = tape.scale(&combined.expect("heads >= 1"), 1.0 / self.heads as f64);

        let last_row = tape.row(&score_map, self.order - 1)?;
        let row_sum: f64 = last_row.data().iter().sum();
        if row_sum.abs() < DEGENERATE_SUM_THRESHOLD {
            return Err(Error::DegenerateNormalization {
                sum_abs: row_sum.abs(),
                threshold: DEGENERATE_SUM_THRESHOLD,
            });
        }
        let sum = tape.sum(&last_row);
        let inv = tape.recip(&sum)?;
        let normalized = tape.mul_scalar(&last_row, &inv)?;
        CoefficientVector::from_tensor(normalized)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RootRng;
    use approx::assert_abs_diff_eq;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::matrix(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn ring_keeps_newest_first() {
        let mut buf = HistoryBuffer::new(3).unwrap();
        for v in [1.0, 2.0, 3.0, 4.0] {
            buf.push(mat(1, 1, &[v])).unwrap();
        }
        let window: Vec<f64> = buf.window().unwrap().iter().map(|t| t.item()).collect();
        assert_eq!(window, vec![4.0, 3.0, 2.0]);
    }

    #[test]
    fn order_one_keeps_only_latest() {
        let mut buf = HistoryBuffer::new(1).unwrap();
        buf.push(mat(1, 1, &[1.0])).unwrap();
        buf.push(mat(1, 1, &[2.0])).unwrap();
        let window = buf.window().unwrap();
        assert_eq!(window.len(), 1);
        assert_eq!(window[0].item(), 2.0);
    }

    #[test]
    fn cold_window_is_a_state_error() {
        let mut buf = HistoryBuffer::new(3).unwrap();
        buf.push(mat(1, 1, &[1.0])).unwrap();
        buf.push(mat(1, 1, &[2.0])).unwrap();
        assert!(matches!(buf.window(), Err(Error::State(_))));
    }

    #[test]
    fn push_rejects_shape_change() {
        let mut buf = HistoryBuffer::new(2).unwrap();
        buf.push(mat(2, 2, &[0.0; 4])).unwrap();
        assert!(buf.push(mat(1, 4, &[0.0; 4])).is_err());
    }

    #[test]
    fn direct_examples() {
        for (raw, expected) in [
            (vec![2.0, -1.0], vec![2.0, -1.0]),
            (vec![4.0, -2.0], vec![2.0, -1.0]),
            (vec![1.0, 1.0, 2.0], vec![0.25, 0.25, 0.5]),
        ] {
            let direct = DirectTemporal::new(raw.len()).unwrap();
            direct.raw().set_data(&raw);
            let mut tape = Tape::new();
            let c = direct.coefficients(&mut tape).unwrap();
            for (got, want) in c.values().iter().zip(&expected) {
                assert_abs_diff_eq!(got, want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn direct_scale_invariance() {
        let base = vec![0.3, -0.9, 1.2, 0.1];
        for lambda in [-2.0, 0.5, 10.0] {
            let a = DirectTemporal::new(4).unwrap();
            a.raw().set_data(&base);
            let b = DirectTemporal::new(4).unwrap();
            b.raw()
                .set_data(&base.iter().map(|v| lambda * v).collect::<Vec<_>>());
            let ca = a.coefficients(&mut Tape::new()).unwrap().values();
            let cb = b.coefficients(&mut Tape::new()).unwrap().values();
            for (x, y) in ca.iter().zip(&cb) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn direct_initializes_to_forward_euler() {
        let direct = DirectTemporal::new(4).unwrap();
        let c = direct.coefficients(&mut Tape::new()).unwrap().values();
        assert_eq!(c, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn direct_degenerate_sum_is_an_error() {
        let direct = DirectTemporal::new(2).unwrap();
        direct.raw().set_data(&[1.0, -1.0 + 1e-9]);
        let err = direct.coefficients(&mut Tape::new()).unwrap_err();
        assert!(matches!(err, Error::DegenerateNormalization { .. }));
    }

    fn warm_buffer(order: usize, nodes: usize, dim: usize, rng: &mut RngStream) -> HistoryBuffer {
        let mut buf = HistoryBuffer::new(order).unwrap();
        for _ in 0..order {
            let data: Vec<f64> = (0..nodes * dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
            buf.push(mat(nodes, dim, &data)).unwrap();
        }
        buf
    }

    #[test]
    fn attention_identical_states_give_uniform_coefficients() {
        let mut rng = RootRng::new(5).stream("attn-uniform");
        let order = 4;
        let state = mat(3, 8, &(0..24).map(|i| (i as f64) * 0.1 - 1.0).collect::<Vec<_>>());
        let mut buf = HistoryBuffer::new(order).unwrap();
        for _ in 0..order {
            buf.push(state.clone()).unwrap();
        }
        let attn = AttentionTemporal::new(order, 8, 4, &mut rng).unwrap();
        let c = attn.coefficients(&mut Tape::new(), &buf).unwrap().values();
        for v in &c {
            assert_abs_diff_eq!(v, &(1.0 / order as f64), epsilon = 1e-12);
        }
    }

    #[test]
    fn attention_order_one_is_always_one() {
        let mut rng = RootRng::new(6).stream("attn-o1");
        for seed in 0..5 {
            let mut data_rng = RootRng::new(seed).stream("data");
            let buf = warm_buffer(1, 4, 8, &mut data_rng);
            let attn = AttentionTemporal::new(1, 8, 4, &mut rng).unwrap();
            let c = attn.coefficients(&mut Tape::new(), &buf).unwrap().values();
            assert_eq!(c, vec![1.0]);
        }
    }

    #[test]
    fn attention_sums_to_one_and_admits_negative_entries() {
        let root = RootRng::new(99);
        let mut found_negative = false;
        for trial in 0..50 {
            let mut wrng = root.stream(&format!("attn-w-{trial}"));
            let mut drng = root.stream(&format!("attn-d-{trial}"));
            let buf = warm_buffer(3, 4, 8, &mut drng);
            let attn = AttentionTemporal::new(3, 8, 4, &mut wrng).unwrap();
            let c = attn.coefficients(&mut Tape::new(), &buf).unwrap().values();
            let sum: f64 = c.iter().sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-10);
            if c.iter().any(|v| *v < 0.0) {
                found_negative = true;
            }
        }
        assert!(
            found_negative,
            "no negative coefficient found over 50 random draws"
        );
    }

    #[test]
    fn attention_is_node_permutation_invariant() {
        let mut wrng = RootRng::new(17).stream("attn-perm-w");
        let mut drng = RootRng::new(18).stream("attn-perm-d");
        let (order, nodes, dim) = (3, 5, 8);
        let attn = AttentionTemporal::new(order, dim, 4, &mut wrng).unwrap();

        let frames: Vec<Vec<f64>> = (0..order)
            .map(|_| (0..nodes * dim).map(|_| drng.uniform(-1.0, 1.0)).collect())
            .collect();
        let mut buf = HistoryBuffer::new(order).unwrap();
        for f in &frames {
            buf.push(mat(nodes, dim, f)).unwrap();
        }
        let base = attn.coefficients(&mut Tape::new(), &buf).unwrap().values();

        let perm = [3usize, 0, 4, 1, 2];
        let mut permuted = HistoryBuffer::new(order).unwrap();
        for f in &frames {
            let mut p = vec![0.0; nodes * dim];
            for (dst, &src) in perm.iter().enumerate() {
                p[dst * dim..(dst + 1) * dim].copy_from_slice(&f[src * dim..(src + 1) * dim]);
            }
            permuted.push(mat(nodes, dim, &p)).unwrap();
        }
        let shuffled = attn.coefficients(&mut Tape::new(), &permuted).unwrap().values();
        for (a, b) in base.iter().zip(&shuffled) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn attention_cold_buffer_is_a_state_error() {
        let mut rng = RootRng::new(1).stream("attn-cold");
        let attn = AttentionTemporal::new(3, 8, 4, &mut rng).unwrap();
        let mut buf = HistoryBuffer::new(3).unwrap();
        buf.push(mat(2, 8, &[0.5; 16])).unwrap();
        assert!(matches!(
            attn.coefficients(&mut Tape::new(), &buf),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn coefficient_gradients_flow_to_raw_vector() {
        let direct = DirectTemporal::new(3).unwrap();
        direct.raw().set_data(&[2.0, 0.5, -0.5]);
        let mut tape = Tape::new();
        let c = direct.coefficients(&mut tape).unwrap();
        let first = tape.element(c.tensor(), 0).unwrap();
        tape.backward(&first).unwrap();
        let grad = direct.raw().grad().expect("gradient reached raw vector");
        // d(c1)/d(raw) for c1 = r1 / (r1+r2+r3) at [2, 0.5, -0.5]: sum = 2.
        // dc1/dr1 = (sum - r1)/sum^2 = 0, dc1/dr2 = dc1/dr3 = -r1/sum^2 = -0.5.
        assert_abs_diff_eq!(grad[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(grad[1], -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(grad[2], -0.5, epsilon = 1e-12);
    }
}
