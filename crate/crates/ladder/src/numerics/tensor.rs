//! Dense row-major 2-D tensor.
//!
//! Everything in the model is a matrix: minibatches are `batch x width`,
//! per-unit parameter vectors are `1 x width`, scalars are `1 x 1`. Matrices
//! admit a closed validation story (shape + finiteness) and avoid a zoo of
//! rank-generic code this project does not need.

use super::scalar::Scalar;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Fast finiteness test for a slice.
///
/// Accumulates into `f64`: any NaN or infinity forces the running sum
/// non-finite and can never cancel back (inf + -inf is NaN). On the rare
/// non-finite sum we rescan exactly, so all-finite inputs whose sum overflows
/// are not misreported.
pub(crate) fn slice_is_finite<S: Scalar>(xs: &[S]) -> bool {
    let sum: f64 = xs.iter().map(|v| v.as_f64()).sum();
    if sum.is_finite() {
        true
    } else {
        xs.iter().all(|v| v.is_finite())
    }
}

/// Two-dimensional row-major tensor with validated construction.
///
/// Deserialization restores fields verbatim; containers that load tensors
/// from disk call [`Tensor::validate`] afterwards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar", deserialize = "S: Scalar"))]
pub struct Tensor<S: Scalar> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    /// Build a tensor, rejecting length mismatches and non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "Tensor::new",
                detail: format!(
                    "{rows}x{cols} needs {} elements, got {}",
                    rows * cols,
                    data.len()
                ),
            });
        }
        if !slice_is_finite(&data) {
            return Err(Error::NonFinite { op: "Tensor::new" });
        }
        Ok(Self { rows, cols, data })
    }

    /// Build without checks; callers must guarantee `data.len() == rows*cols`
    /// and validate finiteness themselves (the tape does so per operation).
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<S>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    /// All-zeros tensor.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![S::zero(); rows * cols])
    }

    /// Constant-filled tensor; the value must be finite.
    pub fn filled(rows: usize, cols: usize, value: S) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    /// Build from nested rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::ShapeMismatch {
                    op: "Tensor::from_rows",
                    detail: format!("ragged rows: expected width {c}, got {}", row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(r, c, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// Element at `(i, j)`; panics out of bounds.
    pub fn get(&self, i: usize, j: usize) -> S {
        assert!(i < self.rows && j < self.cols, "Tensor::get out of bounds");
        self.data[i * self.cols + j]
    }

    /// Row `i` as a slice.
    pub fn row(&self) -> std::slice::Chunks<'_, S> {
        self.data.chunks(self.cols.max(1))
    }

    /// Row `i` as a slice; panics out of bounds.
    pub fn row_slice(&self, i: usize) -> &[S] {
        assert!(i < self.rows, "Tensor::row_slice out of bounds");
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        slice_is_finite(&self.data)
    }

    /// Validate invariants after an unchecked path (e.g. deserialization).
    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::ShapeMismatch {
                op: "Tensor::validate",
                detail: format!(
                    "{}x{} with {} elements",
                    self.rows,
                    self.cols,
                    self.data.len()
                ),
            });
        }
        if !self.is_finite() {
            return Err(Error::NonFinite { op: "Tensor::validate" });
        }
        Ok(())
    }

    /// Map every element through `f`, validating the result.
    pub fn map(&self, f: impl Fn(S) -> S) -> Result<Self> {
        Self::new(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Widen to `f64` (used by reports and by mixed-precision comparisons).
    pub fn to_f64(&self) -> Tensor<f64> {
        Tensor::from_raw(self.rows, self.cols, self.data.iter().map(|v| v.as_f64()).collect())
    }

    /// Narrowing/widening precision conversion.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_raw(
            self.rows,
            self.cols,
            self.data.iter().map(|v| T::from_f64(v.as_f64())).collect(),
        )
    }
}

/// Per-column mean and population standard deviation of a batch.
///
/// Returns a pair of `1 x cols` tensors. The standard deviation uses the
/// population convention (divide by `rows`), matching batch normalization.
pub fn batch_stats<S: Scalar>(t: &Tensor<S>) -> Result<(Tensor<S>, Tensor<S>)> {
    if t.rows() == 0 {
        return Err(Error::ShapeMismatch {
            op: "batch_stats",
            detail: "empty batch".into(),
        });
    }
    let (r, c) = t.shape();
    let inv_n = 1.0 / r as f64;
    let mut mean = vec![0.0f64; c];
    for i in 0..r {
        let row = t.row_slice(i);
        for j in 0..c {
            mean[j] += row[j].as_f64();
        }
    }
    for m in mean.iter_mut() {
        *m *= inv_n;
    }
    let mut var = vec![0.0f64; c];
    for i in 0..r {
        let row = t.row_slice(i);
        for j in 0..c {
            let d = row[j].as_f64() - mean[j];
            var[j] += d * d;
        }
    }
    let mean_t = Tensor::new(1, c, mean.iter().map(|&m| S::from_f64(m)).collect())?;
    let std_t = Tensor::new(
        1,
        c,
        var.iter().map(|&v| S::from_f64((v * inv_n).sqrt())).collect(),
    )?;
    Ok((mean_t, std_t))
}
