//! Dense tensors and the reverse-mode autodiff tape.

mod gradcheck;
mod kernels;
mod tape;

pub use gradcheck::{grad_check, grad_check_sampled};
pub use tape::{stable_sum, NodeId, Tape};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense multi-dimensional array in row-major order, with an optional
/// gradient buffer and a handle into the active tape.
#[derive(Debug, Clone)]
pub struct Tensor<S: Scalar> {
    shape: Vec<usize>,
    data: Vec<S>,
    requires_grad: bool,
    grad: Option<Vec<S>>,
    tape_id: Option<NodeId>,
}

impl<S: Scalar> Tensor<S> {
    pub fn from_vec(shape: Vec<usize>, data: Vec<S>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Dimension(format!(
                "tensor shape {shape:?} has a zero dimension"
            )));
        }
        if numel != data.len() {
            return Err(Error::Dimension(format!(
                "tensor shape {:?} implies {} elements, got {}",
                shape,
                numel,
                data.len()
            )));
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
            tape_id: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![S::zero(); numel],
            requires_grad: false,
            grad: None,
            tape_id: None,
        }
    }

    pub fn filled(shape: Vec<usize>, value: S) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![value; numel],
            requires_grad: false,
            grad: None,
            tape_id: None,
        }
    }

    pub fn scalar(value: S) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
            requires_grad: false,
            grad: None,
            tape_id: None,
        }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
    }

    pub fn grad(&self) -> Option<&[S]> {
        self.grad.as_deref()
    }

    /// Accumulate `delta` into the gradient buffer, allocating it on first
    /// use. The buffer always matches the data shape.
    pub fn accumulate_grad(&mut self, delta: &[S]) -> Result<()> {
        if delta.len() != self.data.len() {
            return Err(Error::Dimension(format!(
                "gradient length {} does not match tensor numel {}",
                delta.len(),
                self.data.len()
            )));
        }
        let grad = self.grad.get_or_insert_with(|| vec![S::zero(); self.data.len()]);
        for (g, d) in grad.iter_mut().zip(delta) {
            *g += *d;
        }
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn tape_id(&self) -> Option<NodeId> {
        self.tape_id
    }

    pub fn set_tape_id(&mut self, id: Option<NodeId>) {
        self.tape_id = id;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
