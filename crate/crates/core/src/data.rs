//! Tabular datasets: row-major features plus one or two target columns.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("row {row} has {got} values, expected {expected}")]
    Width { row: usize, got: usize, expected: usize },
    #[error("dataset is empty")]
    Empty,
    #[error("row index {0} out of range")]
    Index(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
    features: Vec<f64>,
    targets: Vec<f64>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, target_names: Vec<String>) -> Self {
        Dataset {
            feature_names,
            target_names,
            features: Vec::new(),
            targets: Vec::new(),
        }
    }

    pub fn from_rows(
        feature_names: Vec<String>,
        target_names: Vec<String>,
        rows: &[(Vec<f64>, Vec<f64>)],
    ) -> Result<Self, DataError> {
        let mut ds = Dataset::new(feature_names, target_names);
        for (x, y) in rows {
            ds.push(x, y)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, x: &[f64], y: &[f64]) -> Result<(), DataError> {
        let row = self.len();
        if x.len() != self.n_features() {
            return Err(DataError::Width { row, got: x.len(), expected: self.n_features() });
        }
        if y.len() != self.n_targets() {
            return Err(DataError::Width { row, got: y.len(), expected: self.n_targets() });
        }
        self.features.extend_from_slice(x);
        self.targets.extend_from_slice(y);
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_targets(&self) -> usize {
        self.target_names.len()
    }

    pub fn len(&self) -> usize {
        if self.n_features() == 0 {
            0
        } else {
            self.features.len() / self.n_features()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, i: usize) -> &[f64] {
        let m = self.n_features();
        &self.features[i * m..(i + 1) * m]
    }

    pub fn y(&self, i: usize) -> &[f64] {
        let t = self.n_targets();
        &self.targets[i * t..(i + 1) * t]
    }

    /// Row-major feature buffer.
    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Row-major target buffer.
    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.x(i)[j]).collect()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Copy of the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Dataset, DataError> {
        let mut out = Dataset::new(self.feature_names.clone(), self.target_names.clone());
        out.features.reserve(rows.len() * self.n_features());
        out.targets.reserve(rows.len() * self.n_targets());
        for &i in rows {
            if i >= self.len() {
                return Err(DataError::Index(i));
            }
            out.features.extend_from_slice(self.x(i));
            out.targets.extend_from_slice(self.y(i));
        }
        Ok(out)
    }

    /// Same targets with a replaced feature matrix.
    pub fn with_features(&self, names: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Dataset, DataError> {
        let mut out = Dataset::new(names, self.target_names.clone());
        for (i, x) in rows.iter().enumerate() {
            out.push(x, self.y(i))?;
        }
        Ok(out)
    }

    /// Two-column one-hot targets.
    pub fn is_classification(&self) -> bool {
        self.n_targets() == 2
    }
}
