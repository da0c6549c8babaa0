use serde::{Deserialize, Serialize};

use super::Instance;
use crate::{Error, Result};

/// Floor applied to per-feature standard deviations.
pub const STD_EPSILON: f64 = 1e-8;

/// Per-feature mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn standardize_row(&self, row: &mut [f64]) {
        for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = (*x - m) / s;
        }
    }
}

/// Statistics over `instances`. Callers pass meta-train instances only, so
/// nothing about the meta-test classes leaks into training.
pub fn compute_norm_stats(instances: &[Instance]) -> Result<NormStats> {
    let first = instances
        .first()
        .ok_or_else(|| Error::Argument("cannot compute statistics of an empty pool".into()))?;
    let dim = first.features.len();
    if let Some(bad) = instances.iter().position(|i| i.features.len() != dim) {
        return Err(Error::Shape(format!(
            "instance {bad} has {} features, expected {dim}",
            instances[bad].features.len()
        )));
    }
    let n = instances.len() as f64;
    let mut mean = vec![0.0; dim];
    for inst in instances {
        for (m, x) in mean.iter_mut().zip(&inst.features) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for inst in instances {
        for ((v, x), m) in var.iter_mut().zip(&inst.features).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std = var
        .into_iter()
        .map(|v| (v / n).sqrt().max(STD_EPSILON))
        .collect();
    Ok(NormStats { mean, std })
}

/// `x ← (x − mean) / std` for every feature of every instance.
pub fn apply_standardization(instances: &[Instance], stats: &NormStats) -> Result<Vec<Instance>> {
    instances
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            if inst.features.len() != stats.dim() {
                return Err(Error::Shape(format!(
                    "instance {i} has {} features, statistics cover {}",
                    inst.features.len(),
                    stats.dim()
                )));
            }
            let mut out = inst.clone();
            stats.standardize_row(&mut out.features);
            Ok(out)
        })
        .collect()
}
