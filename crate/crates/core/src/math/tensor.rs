use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major array.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseArray<T> {
    shape: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> DenseArray<T> {
    pub fn new(shape: Vec<usize>, values: Vec<T>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Dimension(format!("invalid shape {shape:?}")));
        }
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(DenseArray { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape, vec![T::zero(); n])
    }

    /// 1-D array.
    pub fn vector(values: Vec<T>) -> Result<Self> {
        Self::new(vec![values.len()], values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Row `r` of a 2-D array.
    pub fn row(&self, r: usize) -> &[T] {
        let cols = self.shape[1];
        &self.values[r * cols..(r + 1) * cols]
    }
}
