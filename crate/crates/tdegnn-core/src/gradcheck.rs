//! Central finite-difference gradient verification.
//!
//! The checker re-evaluates the forward closure at perturbed inputs and never
//! touches the tape's backward path, so it stays an independent oracle for
//! the analytic gradients.

use crate::error::Result;
use crate::tensor::{Tape, Tensor};

/// Outcome of one gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Worst relative error over all checked entries, with the error of entry
    /// `e` of input `i` defined as `|a - n| / max(1, |a|, |n|)`.
    pub max_rel_error: f64,
    /// `(input index, element index, analytic, numeric)` of the worst entry.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

/// Compare backward gradients of a scalar-valued forward closure against
/// central finite differences with the given step.
///
/// The closure must be deterministic: two evaluations at the same inputs must
/// produce the same loss (seed any internal randomness per call).
pub fn check_gradients<F>(forward: F, inputs: &[Tensor], step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Tensor]) -> Result<Tensor>,
{
    // Analytic pass.
    for t in inputs {
        t.zero_grad();
    }
    let mut tape = Tape::new();
    let loss = forward(&mut tape, inputs)?;
    tape.backward(&loss)?;
    let analytic: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        Ok(forward(&mut tape, inputs)?.item())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
    };
    for (ti, tensor) in inputs.iter().enumerate() {
        if !tensor.requires_grad() {
            continue;
        }
        let base = tensor.to_vec();
        for e in 0..base.len() {
            let mut bumped = base.clone();
            bumped[e] = base[e] + step;
            tensor.set_data(&bumped);
            let plus = eval(inputs)?;
            bumped[e] = base[e] - step;
            tensor.set_data(&bumped);
            let minus = eval(inputs)?;
            tensor.set_data(&base);

            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[ti][e];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((ti, e, a, numeric));
            }
        }
    }
    Ok(report)
}
