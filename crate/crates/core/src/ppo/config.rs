use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndiff::Adam;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub epsilon: f64,
    pub batch_size: usize,
    pub minibatches: usize,
    pub epochs: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub base_lr: f64,
    pub value_lr: f64,
    /// L2 coefficient on the message function's parameters.
    pub l2_lambda: f64,
    pub entropy_coef: f64,
    pub normalize_advantages: bool,
    pub adam: Adam,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            batch_size: 2048,
            minibatches: 8,
            epochs: 10,
            gamma: 0.99,
            gae_lambda: 0.95,
            base_lr: 3e-4,
            value_lr: 3e-4,
            l2_lambda: 0.0,
            entropy_coef: 0.0,
            normalize_advantages: true,
            adam: Adam::default(),
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad(format!("ppo.epsilon must lie in (0, 1], got {}", self.epsilon));
        }
        if self.minibatches == 0 || self.epochs == 0 {
            return bad("ppo.minibatches and ppo.epochs must be positive".into());
        }
        if self.batch_size == 0 || !self.batch_size.is_multiple_of(self.minibatches) {
            return bad(format!(
                "ppo.batch_size {} must be a positive multiple of ppo.minibatches {}",
                self.batch_size, self.minibatches
            ));
        }
        for (name, v) in [("gamma", self.gamma), ("gae_lambda", self.gae_lambda)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("ppo.{name} must lie in [0, 1], got {v}"));
            }
        }
        for (name, v) in [("base_lr", self.base_lr), ("value_lr", self.value_lr)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("ppo.{name} must be finite and non-negative, got {v}"));
            }
        }
        if self.l2_lambda.is_nan() || self.l2_lambda < 0.0 {
            return bad(format!("ppo.l2_lambda must be non-negative, got {}", self.l2_lambda));
        }
        if !self.entropy_coef.is_finite() {
            return bad("ppo.entropy_coef must be finite".into());
        }
        Ok(())
    }
}
