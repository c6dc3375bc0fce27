//! Dense row-major 2-D arrays. Signals are `time x channels`, weight
//! matrices are `in x out`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Array<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Array<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Array {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, v: S) -> Self {
        Array {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                details: format!("{}x{} != {} values", rows, cols, data.len()),
            });
        }
        Ok(Array { rows, cols, data })
    }

    pub fn scalar_value(v: S) -> Self {
        Array {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    /// Column vector from a slice (T x 1).
    pub fn column(data: Vec<S>) -> Self {
        Array {
            rows: data.len(),
            cols: 1,
            data,
        }
    }

    /// Uniform init in +-scale.
    pub fn uniform<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| S::from_double(rng.gen_range(-scale..=scale)))
            .collect();
        Array { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Value of a 1x1 array.
    pub fn item(&self) -> S {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn fill(&mut self, v: S) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map<F: Fn(S) -> S>(&self, f: F) -> Self {
        Array {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn to_double(&self) -> Array<f64> {
        Array {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x.to_double()).collect(),
        }
    }

    pub fn from_double_array(a: &Array<f64>) -> Self {
        Array {
            rows: a.rows,
            cols: a.cols,
            data: a.data.iter().map(|&x| S::from_double(x)).collect(),
        }
    }
}
