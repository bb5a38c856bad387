//! Dense 64-bit real tensors with reverse-mode gradient propagation.
//!
//! Tensors are cheap reference-counted handles. Values are immutable once
//! created except for parameter updates between passes and gradient
//! accumulation during backward; shapes never change.

mod ops;
mod tape;

pub use tape::Tape;

use std::cell::{Cell, Ref, RefCell};
use std::rc::Rc;

use crate::error::{Error, Result};

struct TensorData {
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    requires_grad: Cell<bool>,
    grad: RefCell<Option<Vec<f64>>>,
}

/// A dense row-major tensor of 64-bit reals with 1 to 3 axes.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<TensorData>,
}

impl Tensor {
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(Error::state(format!(
                "tensor rank must be 1..=3, got shape {shape:?}"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape {
                op: "from_vec",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        Ok(Tensor {
            inner: Rc::new(TensorData {
                shape: shape.to_vec(),
                data: RefCell::new(data),
                requires_grad: Cell::new(false),
                grad: RefCell::new(None),
            }),
        })
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let numel: usize = shape.iter().product();
        Tensor::from_vec(shape, vec![0.0; numel]).expect("zeros: valid shape")
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::from_vec(&[1], vec![value]).expect("scalar")
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Tensor> {
        Tensor::from_vec(&[rows, cols], data)
    }

    /// A learnable leaf: gradients accumulate here during backward.
    pub fn param(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let t = Tensor::from_vec(shape, data)?;
        t.set_requires_grad(true);
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn numel(&self) -> usize {
        self.inner.shape.iter().product()
    }

    /// Row/column counts of a 2-D tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.inner.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            other => Err(Error::state(format!("expected a matrix, got {other:?}"))),
        }
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.inner.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.data.borrow().clone()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.numel(), 1, "item() on tensor of shape {:?}", self.shape());
        self.inner.data.borrow()[0]
    }

    /// Overwrite the values in place (parameter updates, perturbations).
    /// The shape is fixed; the new buffer must have the same length.
    pub fn set_data(&self, values: &[f64]) {
        let mut d = self.inner.data.borrow_mut();
        assert_eq!(d.len(), values.len(), "set_data length mismatch");
        d.copy_from_slice(values);
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad.get()
    }

    pub fn set_requires_grad(&self, yes: bool) {
        self.inner.requires_grad.set(yes);
    }

    /// A copy of the accumulated gradient, if any backward pass reached this tensor.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    pub(crate) fn accumulate_grad(&self, delta: &[f64]) {
        let mut g = self.inner.grad.borrow_mut();
        match g.as_mut() {
            Some(buf) => {
                for (b, d) in buf.iter_mut().zip(delta) {
                    *b += d;
                }
            }
            None => {
                assert_eq!(delta.len(), self.numel(), "gradient length mismatch");
                *g = Some(delta.to_vec());
            }
        }
    }

    pub(crate) fn grad_vec(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    /// Handle identity: do two handles share storage?
    pub fn ptr_eq(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// Deep copy with fresh storage; gradients are not carried over.
    pub fn detached_copy(&self) -> Tensor {
        let t = Tensor::from_vec(&self.inner.shape, self.to_vec()).expect("copy");
        t.set_requires_grad(self.requires_grad());
        t
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad.get())
            .field("data", &self.inner.data.borrow())
            .finish()
    }
}
