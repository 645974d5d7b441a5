use serde::{Deserialize, Serialize};

use crate::error::{RdroError, Result};

/// Tolerance on the total mass of a probability measure.
pub const PROBABILITY_SUM_TOL: f64 = 1e-12;

/// A finitely supported nonnegative measure, optionally carrying the
/// support points it weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<Vec<f64>>>,
}

impl DiscreteMeasure {
    /// Builds a general nonnegative measure.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        for (j, w) in weights.iter().enumerate() {
            if !w.is_finite() || *w < 0.0 {
                return Err(RdroError::Domain(format!(
                    "weight {j} is {w}; weights must be finite and nonnegative"
                )));
            }
        }
        Ok(Self { weights, labels: None })
    }

    /// Builds a measure that must sum to one.
    pub fn probability(weights: Vec<f64>) -> Result<Self> {
        let m = Self::new(weights)?;
        let total = m.total_mass();
        if (total - 1.0).abs() > PROBABILITY_SUM_TOL {
            return Err(RdroError::Domain(format!("probability weights sum to {total}, not 1")));
        }
        Ok(m)
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
            labels: None,
        }
    }

    pub fn with_labels(mut self, labels: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != self.weights.len() {
            return Err(RdroError::Dimension(format!(
                "{} labels for {} weights",
                labels.len(),
                self.weights.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn labels(&self) -> Option<&[Vec<f64>]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_probability(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= PROBABILITY_SUM_TOL
    }

    /// Indices of atoms carrying positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&j| self.weights[j] > 0.0).collect()
    }
}

impl AsRef<[f64]> for DiscreteMeasure {
    fn as_ref(&self) -> &[f64] {
        &self.weights
    }
}
