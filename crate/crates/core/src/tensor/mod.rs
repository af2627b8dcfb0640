//! Dense N-D tensors and the network units built on top of them.

mod conv;
mod convlstm;
mod gradcheck;
mod lstm;
mod pool;

pub use conv::{conv3d, conv3d_backward, conv3d_linear, relu, relu_backward, Activation, Conv3dGrads, Conv3dParams, Padding};
pub use convlstm::{
    convlstm_step, convlstm_step_backward, convlstm_step_cached, ConvLstmCache, ConvLstmParams, ConvLstmState,
    ConvLstmStepGrads,
};
pub use gradcheck::{central_difference, grad_check};
pub use lstm::{lstm_step, lstm_step_backward, lstm_step_cached, LstmCache, LstmParams, LstmStepGrads};
pub(crate) use convlstm::StackedConvLstm;
pub(crate) use pool::max_pool_argmax;
pub use pool::{pool3d, pool3d_backward, upsample, upsample_backward, PoolMode};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Four-gate container shared by the LSTM and ConvLSTM parameter sets.
/// Field order (input, forget, cell, output) is also the serialization order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gates<T> {
    pub i: T,
    pub f: T,
    pub c: T,
    pub o: T,
}

impl<T> Gates<T> {
    pub fn from_fn(mut f: impl FnMut() -> T) -> Self {
        Gates { i: f(), f: f(), c: f(), o: f() }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        [&self.i, &self.f, &self.c, &self.o].into_iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        [&mut self.i, &mut self.f, &mut self.c, &mut self.o].into_iter()
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Gates<U> {
        Gates { i: f(&self.i), f: f(&self.f), c: f(&self.c), o: f(&self.o) }
    }
}

/// Row-major N-D array of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        validate_shape(&shape)?;
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::InvalidShape {
                shape,
                reason: format!("holds {} values but the shape requires {len}", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    /// Panics on a zero-sized dimension.
    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f64) -> Self {
        let shape = shape.into();
        validate_shape(&shape).expect("tensor dimensions must be positive");
        let len = shape.iter().product();
        Tensor { shape, data: vec![value; len] }
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, mut f: impl FnMut(usize) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        t.data.iter_mut().enumerate().for_each(|(i, v)| *v = f(i));
        t
    }

    /// Uniform samples in `[-scale, scale]`.
    pub fn uniform<R: Rng + ?Sized>(shape: impl Into<Vec<usize>>, scale: f64, rng: &mut R) -> Self {
        Self::from_fn(shape, |_| rng.random_range(-scale..=scale))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.shape)
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(self.strides())
            .map(|(i, s)| i * s)
            .sum()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.expect_shape(other.shape(), "elementwise operand")?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|v| v * factor)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.expect_shape(other.shape(), "accumulated operand")?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// `self += factor * other`
    pub fn axpy(&mut self, factor: f64, other: &Tensor) -> Result<()> {
        self.expect_shape(other.shape(), "axpy operand")?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += factor * b);
        Ok(())
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.expect_shape(other.shape(), "dot operand")?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn expect_shape(&self, expected: &[usize], context: &str) -> Result<()> {
        if self.shape != expected {
            return Err(Error::shape(context, expected, self.shape.clone()));
        }
        Ok(())
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(Error::InvalidShape { shape: shape.to_vec(), reason: "rank must be at least 1".into() });
    }
    if shape.contains(&0) {
        return Err(Error::InvalidShape { shape: shape.to_vec(), reason: "dimension sizes must be at least 1".into() });
    }
    Ok(())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
