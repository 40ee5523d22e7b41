use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major tensor with an explicit shape; the storage for every
/// trainable weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::Shape(format!("shape {shape:?} needs {expected} values, got {}", data.len())));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// `batch x channels x len` activations, laid out batch-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTensor {
    batch: usize,
    channels: usize,
    len: usize,
    data: Vec<f64>,
}

impl BatchTensor {
    pub fn zeros(batch: usize, channels: usize, len: usize) -> Self {
        Self { batch, channels, len, data: vec![0.0; batch * channels * len] }
    }

    pub fn from_vec(batch: usize, channels: usize, len: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != batch * channels * len {
            return Err(Error::Shape(format!(
                "{batch}x{channels}x{len} needs {} values, got {}",
                batch * channels * len,
                data.len()
            )));
        }
        Ok(Self { batch, channels, len, data })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.channels, self.len)
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

    pub fn row(&self, i: usize, c: usize) -> &[f64] {
        let start = (i * self.channels + c) * self.len;
        &self.data[start..start + self.len]
    }

    pub fn row_mut(&mut self, i: usize, c: usize) -> &mut [f64] {
        let start = (i * self.channels + c) * self.len;
        &mut self.data[start..start + self.len]
    }

    /// Rows `indices` of the batch, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let stride = self.channels * self.len;
        let mut data = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            data.extend_from_slice(&self.data[i * stride..(i + 1) * stride]);
        }
        Self { batch: indices.len(), channels: self.channels, len: self.len, data }
    }
}
