//! Dense row-major matrices, trainable parameter tensors and gradient buffers.

mod adam;
pub mod checkpoint;
mod gradcheck;
pub mod ops;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{
    fd_noise_floor, finite_difference_check, finite_difference_check_floored, GradCheckReport, HasParams,
};

use crate::error::{Error, Result};

/// Row-major `rows × cols` matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(
                "DenseMatrix::from_vec",
                format!("{} values for a {rows}x{cols} matrix", data.len()),
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. Panics on ragged input.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn row_vector(values: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn add_assign(&mut self, other: &DenseMatrix) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|x| *x *= alpha);
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    #[inline]
    pub(crate) fn debug_check_finite(&self, op: &str) {
        debug_assert!(self.is_finite(), "non-finite entry after {op}");
    }
}

/// A learnable tensor with its accumulated gradient.
///
/// `slot` is the tensor's index inside its owning model; [`GradBuffer`]s are laid out in
/// slot order so that per-chunk gradients can be accumulated away from the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub slot: usize,
    pub value: DenseMatrix,
    pub grad: DenseMatrix,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, slot: usize, value: DenseMatrix) -> Self {
        let grad = DenseMatrix::zeros(value.rows(), value.cols());
        Self {
            name: name.into(),
            slot,
            value,
            grad,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Hands out consecutive slots while a model is being built.
#[derive(Debug, Default)]
pub struct ParamRegistry {
    next: usize,
}

impl ParamRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, value: DenseMatrix) -> ParamTensor {
        let p = ParamTensor::new(name, self.next, value);
        self.next += 1;
        p
    }

    pub fn count(&self) -> usize {
        self.next
    }
}

/// Gradient storage detached from the parameters, one matrix per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBuffer {
    grads: Vec<DenseMatrix>,
}

impl GradBuffer {
    /// Zeroed buffer shaped like `params` (which must be in slot order).
    pub fn for_params<'a>(params: impl IntoIterator<Item = &'a ParamTensor>) -> Self {
        let grads = params
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                debug_assert_eq!(p.slot, i, "params must be listed in slot order");
                DenseMatrix::zeros(p.value.rows(), p.value.cols())
            })
            .collect();
        Self { grads }
    }

    #[inline]
    pub fn slot_mut(&mut self, p: &ParamTensor) -> &mut DenseMatrix {
        &mut self.grads[p.slot]
    }

    #[inline]
    pub fn slot(&self, p: &ParamTensor) -> &DenseMatrix {
        &self.grads[p.slot]
    }

    pub fn get(&self, slot: usize) -> &DenseMatrix {
        &self.grads[slot]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn add_assign(&mut self, other: &GradBuffer) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.grads.iter_mut().for_each(|g| g.scale(alpha));
    }

    pub fn zero(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn norm(&self) -> f64 {
        self.grads
            .iter()
            .map(|g| g.as_slice().iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DenseMatrix> {
        self.grads.iter()
    }
}
