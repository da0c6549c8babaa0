use crate::{Error, Result};

/// Feature rows with local class labels, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    input_dim: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl LabeledBatch {
    pub fn new(input_dim: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Argument("batch input_dim must be >= 1".into()));
        }
        if labels.is_empty() {
            return Err(Error::Argument("batch must hold at least one row".into()));
        }
        if features.len() != labels.len() * input_dim {
            return Err(Error::Shape(format!(
                "{} labels need {} feature values at width {input_dim}, got {}",
                labels.len(),
                labels.len() * input_dim,
                features.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "feature value at row {}, column {} is not finite",
                pos / input_dim,
                pos % input_dim
            )));
        }
        Ok(Self {
            input_dim,
            features,
            labels,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>) -> Result<Self> {
        let input_dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != input_dim) {
            return Err(Error::Shape(format!(
                "row {bad} has width {}, expected {input_dim}",
                rows[bad].len()
            )));
        }
        Self::new(input_dim, rows.concat(), labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.input_dim)
    }

    /// Every row repeated `times` times, in place. Used by invariance checks.
    pub fn repeated(&self, times: usize) -> Self {
        let mut features = Vec::with_capacity(self.features.len() * times);
        let mut labels = Vec::with_capacity(self.labels.len() * times);
        for (row, &y) in self.rows().zip(&self.labels) {
            for _ in 0..times {
                features.extend_from_slice(row);
                labels.push(y);
            }
        }
        Self {
            input_dim: self.input_dim,
            features,
            labels,
        }
    }
}
