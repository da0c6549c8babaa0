use serde::{Deserialize, Serialize};

use crate::nn::{Activation, DEFAULT_HIDDEN_WIDTHS};
use crate::{Error, Result};

/// How the outer gradient treats the inner update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradMode {
    /// Query gradient at the adapted parameters, without the
    /// `(I − αH)` back-propagation through the inner steps.
    #[default]
    FirstOrder,
    /// Full derivative through the inner steps, via Hessian-vector products.
    Exact,
}

/// Meta-learning hyper-parameters. Defaults: α = β = 0.001, 5000
/// meta-iterations over batches of 25 tasks, one adaptation step, 30 test
/// batches of 25 tasks, three hidden layers of 80 ReLU units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MamlConfig {
    /// Inner (adaptation) step size.
    pub alpha: f64,
    /// Outer (meta-update) step size.
    pub beta: f64,
    pub meta_iterations: usize,
    pub meta_batch_size: usize,
    pub adaptation_steps: usize,
    pub grad_mode: GradMode,
    pub seed: u64,
    pub test_batches: usize,
    pub test_batch_size: usize,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
}

impl Default for MamlConfig {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            beta: 0.001,
            meta_iterations: 5000,
            meta_batch_size: 25,
            adaptation_steps: 1,
            grad_mode: GradMode::FirstOrder,
            seed: 0,
            test_batches: 30,
            test_batch_size: 25,
            hidden_widths: DEFAULT_HIDDEN_WIDTHS.to_vec(),
            activation: Activation::Relu,
        }
    }
}

impl MamlConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be a positive finite number, got {v}")));
            }
        }
        for (name, v) in [
            ("meta_batch_size", self.meta_batch_size),
            ("adaptation_steps", self.adaptation_steps),
            ("test_batch_size", self.test_batch_size),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::Config("hidden layer widths must be >= 1".into()));
        }
        Ok(())
    }
}
