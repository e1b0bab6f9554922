//! Dense float64 tensors.
//!
//! A [`Tensor`] is a plain value: a shape, row-major data and an optional
//! gradient buffer. Model parameters are stored as tensors; computation
//! happens on a [`crate::autograd::Tape`], which copies tensor data in and
//! hands gradients back out.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equality compares shape and values only; gradients are transient.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    #[serde(skip)]
    grad: Option<Vec<f64>>,
}

impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.data == other.data
    }
}

pub(crate) fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::Shape("shape must have at least one extent".into()));
    }
    if let Some(pos) = shape.iter().position(|&d| d == 0) {
        return Err(Error::Shape(format!("extent {pos} of {shape:?} is zero")));
    }
    Ok(shape.iter().product())
}

impl Tensor {
    /// Builds a tensor, checking that `values` fills `shape` exactly.
    pub fn new(shape: &[usize], values: Vec<f64>, requires_grad: bool) -> Result<Self> {
        let numel = check_shape(shape)?;
        if numel != values.len() {
            return Err(Error::Shape(format!(
                "length mismatch: shape {shape:?} needs {numel} values, got {}",
                values.len()
            )));
        }
        Ok(Self { shape: shape.to_vec(), data: values, requires_grad, grad: None })
    }

    pub fn zeros(shape: &[usize], requires_grad: bool) -> Result<Self> {
        let numel = check_shape(shape)?;
        Self::new(shape, vec![0.0; numel], requires_grad)
    }

    pub fn scalar(value: f64) -> Self {
        Self { shape: vec![1], data: vec![value], requires_grad: false, grad: None }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the values. Only optimizers and initializers
    /// should need this.
    pub fn data_mut(&mut self) -> &mut [f64] {
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
        if !flag {
            self.grad = None;
        }
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Adds `g` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(Error::Shape(format!(
                "gradient of length {} for tensor {:?}",
                g.len(),
                self.shape
            )));
        }
        match &mut self.grad {
            Some(buf) => buf.iter_mut().zip(g).for_each(|(b, x)| *b += x),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        if let Some(buf) = &mut self.grad {
            buf.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub(crate) fn grad_and_data_mut(&mut self) -> (Option<&mut Vec<f64>>, &mut Vec<f64>) {
        (self.grad.as_mut(), &mut self.data)
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let numel = check_shape(shape)?;
        if numel != self.data.len() {
            return Err(Error::Shape(format!("cannot reshape {:?} into {shape:?}", self.shape)));
        }
        self.shape = shape.to_vec();
        self.grad = None;
        Ok(self)
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}
