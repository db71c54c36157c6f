use crate::chainsim::Observation;
use crate::error::{Error, Result};

use super::compute_gae;

/// A contiguous run of steps from one rollout stream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    /// Value of the state following the segment's last step.
    pub bootstrap_value: f64,
}

/// On-policy data gathered under one policy snapshot.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryBatch {
    pub observations: Vec<Observation>,
    pub actions: Vec<Vec<f64>>,
    /// Means of the pre-update policy at each step.
    pub old_means: Vec<Vec<f64>>,
    /// Per-dimension log std of the pre-update policy.
    pub old_log_std: Vec<f64>,
    pub old_log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub segments: Vec<Segment>,
    /// Returns of episodes that ended inside this batch.
    pub completed_returns: Vec<f64>,
}

impl TrajectoryBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn action_dim(&self) -> usize {
        self.old_log_std.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            self.observations.len(),
            self.actions.len(),
            self.old_means.len(),
            self.old_log_probs.len(),
            self.values.len(),
            self.dones.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::Trainer(format!("batch columns have inconsistent lengths {lens:?} vs {n}")));
        }
        let dim = self.action_dim();
        if self.actions.iter().chain(&self.old_means).any(|a| a.len() != dim) {
            return Err(Error::Trainer("batch actions do not match the policy's action dimension".into()));
        }
        let mut cursor = 0;
        for s in &self.segments {
            if s.start != cursor || s.end < s.start {
                return Err(Error::Trainer("batch segments are not contiguous".into()));
            }
            cursor = s.end;
        }
        if cursor != n {
            return Err(Error::Trainer("batch segments do not cover every step".into()));
        }
        Ok(())
    }

    /// Advantages and value targets, computed segment by segment.
    pub fn advantages(&self, gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut advantages = Vec::with_capacity(self.len());
        let mut returns = Vec::with_capacity(self.len());
        for s in &self.segments {
            let mut values = self.values[s.start..s.end].to_vec();
            values.push(s.bootstrap_value);
            let (a, r) = compute_gae(
                &self.rewards[s.start..s.end],
                &values,
                &self.dones[s.start..s.end],
                gamma,
                lambda,
            )?;
            advantages.extend(a);
            returns.extend(r);
        }
        Ok((advantages, returns))
    }
}
