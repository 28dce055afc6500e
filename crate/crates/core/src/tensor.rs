//! Dense row-major containers used throughout the crate.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VsfError};
use crate::subset::SubsetMask;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(VsfError::ShapeMismatch(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(VsfError::ShapeMismatch("ragged rows".into()));
        }
        let data = rows.iter().flatten().copied().collect();
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
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

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Self {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    /// Contiguous block of rows `[start, end)`.
    pub fn row_range(&self, start: usize, end: usize) -> Self {
        Self {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Keeps only the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Self {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    /// Keeps only the listed columns, in the given order.
    pub fn select_cols(&self, cols: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for r in 0..self.rows {
            let row = self.row(r);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        Self {
            rows: self.rows,
            cols: cols.len(),
            data,
        }
    }
}

/// Dense `steps x vars x features` tensor, laid out as `[p][v][d]`.
///
/// The flat layout matches the query-table flattening: element `(p, v, d)`
/// sits at `p * vars * features + v * features + d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor3 {
    steps: usize,
    vars: usize,
    features: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(steps: usize, vars: usize, features: usize) -> Self {
        Self {
            steps,
            vars,
            features,
            data: vec![0.0; steps * vars * features],
        }
    }

    pub fn from_vec(steps: usize, vars: usize, features: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != steps * vars * features {
            return Err(VsfError::ShapeMismatch(format!(
                "{} values cannot fill a {steps}x{vars}x{features} tensor",
                data.len()
            )));
        }
        Ok(Self {
            steps,
            vars,
            features,
            data,
        })
    }

    /// Single-feature tensor from a `steps x vars` matrix.
    pub fn from_matrix(m: &Matrix) -> Self {
        Self {
            steps: m.rows(),
            vars: m.cols(),
            features: 1,
            data: m.as_slice().to_vec(),
        }
    }

    #[inline]
    pub fn steps(&self) -> usize {
        self.steps
    }

    #[inline]
    pub fn vars(&self) -> usize {
        self.vars
    }

    #[inline]
    pub fn features(&self) -> usize {
        self.features
    }

    #[inline]
    pub fn offset(&self, p: usize, v: usize, d: usize) -> usize {
        (p * self.vars + v) * self.features + d
    }

    #[inline]
    pub fn get(&self, p: usize, v: usize, d: usize) -> f64 {
        self.data[self.offset(p, v, d)]
    }

    #[inline]
    pub fn set(&mut self, p: usize, v: usize, d: usize, value: f64) {
        let i = self.offset(p, v, d);
        self.data[i] = value;
    }

    /// The `features` values of variable `v` at step `p`.
    #[inline]
    pub fn cell(&self, p: usize, v: usize) -> &[f64] {
        let start = self.offset(p, v, 0);
        &self.data[start..start + self.features]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Primary-feature history of variable `v` (feature column 0).
    pub fn primary(&self, v: usize) -> Vec<f64> {
        (0..self.steps).map(|p| self.get(p, v, 0)).collect()
    }

    /// Variable-axis projection `x[:, S, :]`.
    pub fn select_vars(&self, vars: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.steps * vars.len() * self.features);
        for p in 0..self.steps {
            for &v in vars {
                data.extend_from_slice(self.cell(p, v));
            }
        }
        Self {
            steps: self.steps,
            vars: vars.len(),
            features: self.features,
            data,
        }
    }

    pub fn project(&self, subset: &SubsetMask) -> Result<Self> {
        if subset.n_total() != self.vars {
            return Err(VsfError::ShapeMismatch(format!(
                "subset over {} variables applied to tensor with {}",
                subset.n_total(),
                self.vars
            )));
        }
        Ok(self.select_vars(subset.indices()))
    }
}
