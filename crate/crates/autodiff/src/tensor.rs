use crate::{AdError, Elem, Result};

/// Dense row-major 2D tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<Elem>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Tensor {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn ones(rows: usize, cols: usize) -> Tensor {
        Tensor {
            rows,
            cols,
            data: vec![1.0; rows * cols],
        }
    }

    pub fn scalar(v: Elem) -> Tensor {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Elem>) -> Result<Tensor> {
        if data.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(AdError::Shape(format!(
                "{rows}x{cols} tensor needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Tensor { rows, cols, data })
    }

    /// Row vector from a slice.
    pub fn row(data: &[Elem]) -> Tensor {
        Tensor {
            rows: 1,
            cols: data.len(),
            data: data.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Elem {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Elem) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[Elem] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Elem] {
        &mut self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn scalar_value(&self) -> Elem {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    /// Reinterprets the buffer with a new 2D shape of equal length.
    pub fn reshaped(&self, rows: usize, cols: usize) -> Result<Tensor> {
        Tensor::from_vec(rows, cols, self.data.clone())
    }

    pub fn max_abs(&self) -> Elem {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
