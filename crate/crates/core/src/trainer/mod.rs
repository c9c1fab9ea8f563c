//! Regularized cross-entropy training with Nadam, data splitting and
//! evaluation.

mod evaluate;
mod loss;
mod nadam;
mod split;
mod train;

pub use evaluate::{evaluate, EvalReport};
pub use loss::{batch_gradients, compute_loss, regularizer, regularizer_value, BatchGradients};
pub use nadam::{nadam_step, OptimizerState};
pub use split::{split_data, Split};
pub use train::{train, train_with, EpochRecord, TrainHistory};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimization and run-protocol settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Regularization coefficient λ.
    pub l2: f64,
    /// 2 for `λ·Σ‖θᵢ‖²`, 1 for `λ·‖θ‖`.
    pub l2_power: u8,
    pub seed: u64,
    pub runs: usize,
    pub val_fraction: f64,
    /// Most frequent training words kept in the vocabulary.
    pub vocab_limit: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 50,
            learning_rate: 0.002,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2: 1e-4,
            l2_power: 2,
            seed: 0,
            runs: 10,
            val_fraction: 0.1,
            vocab_limit: 50_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return fail("val_fraction must lie strictly between 0 and 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if self.runs == 0 {
            return fail("runs must be at least 1");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return fail("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("beta1 and beta2 must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return fail("epsilon must be positive");
        }
        if !(self.l2 >= 0.0) || !self.l2.is_finite() {
            return fail("l2 must be a finite non-negative number");
        }
        if !matches!(self.l2_power, 1 | 2) {
            return fail("l2_power must be 1 or 2");
        }
        if self.vocab_limit == 0 {
            return fail("vocab_limit must be at least 1");
        }
        Ok(())
    }
}
