//! Dynamic tape for reverse-mode differentiation.

use super::Tensor;
use crate::error::{Error, Result};

/// Records primitive operations during a forward pass and replays them in
/// exact reverse order on `backward`. One tape per forward/backward pair;
/// backward consumes it.
pub struct Tape {
    nodes: Vec<Box<dyn FnOnce()>>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Push a backward step. Called by ops only when the output requires grad.
    pub(super) fn record(&mut self, step: impl FnOnce() + 'static) {
        self.nodes.push(Box::new(step));
    }

    /// Propagate `d loss / d leaf` into every requires-grad tensor reachable
    /// from `loss`. The tape is consumed; a second call is a state error.
    pub fn backward(&mut self, loss: &Tensor) -> Result<()> {
        if self.consumed {
            return Err(Error::state("backward on a consumed tape"));
        }
        if loss.numel() != 1 {
            return Err(Error::Shape {
                op: "backward",
                lhs: loss.shape().to_vec(),
                rhs: vec![1],
            });
        }
        self.consumed = true;
        loss.accumulate_grad(&[1.0]);
        for step in self.nodes.drain(..).rev() {
            step();
        }
        Ok(())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}
