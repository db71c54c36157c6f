use crate::error::{Error, Result};

/// Generalised advantage estimates and value targets for one contiguous segment.
///
/// `values` carries one more entry than `rewards`: the value of the state
/// after the last step, used only when that step is not terminal.
pub fn compute_gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n + 1 || dones.len() != n {
        return Err(Error::Shape(format!(
            "GAE needs {n} dones and {} values, got {} and {}",
            n + 1,
            dones.len(),
            values.len()
        )));
    }
    let mut advantages = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        running = delta + gamma * lambda * live * running;
        advantages[t] = running;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}
