use crate::error::{Error, Result};

/// True when the clipped branch of the surrogate is active and strictly smaller.
pub fn is_clipped(ratio: f64, advantage: f64, epsilon: f64) -> bool {
    (advantage > 0.0 && ratio > 1.0 + epsilon) || (advantage < 0.0 && ratio < 1.0 - epsilon)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateTerm {
    pub ratio: f64,
    pub loss: f64,
    pub clipped: bool,
    /// ∂loss/∂(new log-prob); zero on the clipped branch.
    pub grad_log_prob: f64,
}

pub fn surrogate_term(new_log_prob: f64, old_log_prob: f64, advantage: f64, epsilon: f64, index: usize) -> Result<SurrogateTerm> {
    let ratio = (new_log_prob - old_log_prob).exp();
    if !ratio.is_finite() || !advantage.is_finite() {
        return Err(Error::Numerical {
            index,
            what: format!("probability ratio {ratio} with advantage {advantage}"),
        });
    }
    let unclipped = ratio * advantage;
    let clipped_value = ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage;
    let clipped = is_clipped(ratio, advantage, epsilon);
    Ok(SurrogateTerm {
        ratio,
        loss: -unclipped.min(clipped_value),
        clipped,
        grad_log_prob: if clipped { 0.0 } else { -unclipped },
    })
}

/// Clipped surrogate loss for one state-action pair, and whether it was clipped.
pub fn surrogate_loss(new_log_prob: f64, old_log_prob: f64, advantage: f64, epsilon: f64) -> Result<(f64, bool)> {
    surrogate_term(new_log_prob, old_log_prob, advantage, epsilon, 0).map(|t| (t.loss, t.clipped))
}
