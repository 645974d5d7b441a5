use serde::{Deserialize, Serialize};

use crate::error::{RdroError, Result};
use crate::matrix::Matrix;
use crate::measure::DiscreteMeasure;

/// Nonnegative joint mass between decision atoms (rows) and environment
/// atoms (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CouplingMatrix(Matrix);

impl CouplingMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if let Some((k, v)) = m
            .as_slice()
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(RdroError::Domain(format!(
                "coupling entry ({}, {}) is {v}",
                k / m.cols().max(1),
                k % m.cols().max(1)
            )));
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    /// The product coupling `p ⊗ nu`.
    pub fn product(p: &[f64], nu: &[f64]) -> Self {
        Self(Matrix::from_fn(p.len(), nu.len(), |i, j| p[i] * nu[j]))
    }

    pub(crate) fn from_matrix_unchecked(m: Matrix) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn total_mass(&self) -> f64 {
        self.0.sum()
    }
}

/// First (row-sum) and second (column-sum) marginals of a coupling.
pub fn marginals(gamma: &CouplingMatrix) -> (DiscreteMeasure, DiscreteMeasure) {
    let m = gamma.matrix();
    // entries are validated nonnegative, so the sums are too
    let rows = DiscreteMeasure::new(m.row_sums()).expect("row sums of a nonnegative matrix");
    let cols = DiscreteMeasure::new(m.col_sums()).expect("column sums of a nonnegative matrix");
    (rows, cols)
}
