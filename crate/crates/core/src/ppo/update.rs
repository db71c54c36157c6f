//! The PPO update: shuffled minibatch epochs over one batch, followed by
//! the post-update diagnostics.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::{surrogate_term, PpoConfig, TrajectoryBatch};
use crate::chainsim::Observation;
use crate::error::{Error, Result};
use crate::morphology::MorphologyGraph;
use crate::ndiff::{accumulate_l2, adam_step, Tape, Tensor};
use crate::policy::{gaussian_kl, gaussian_log_prob, Actor, ValueNet};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateStats {
    /// Mean analytic KL(pre-update ‖ post-update) over the batch.
    pub mean_kl: f64,
    /// Share of samples on the clipped branch during the final epoch.
    pub clip_fraction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub l2_loss: f64,
    /// Per epoch: KL from the pre-update policy, measured on each minibatch just before its step.
    pub epoch_kl: Vec<f64>,
    pub epoch_clip_fraction: Vec<f64>,
    pub epoch_value_loss: Vec<f64>,
    /// Final-epoch probability ratios, indexed by batch sample.
    pub ratios: Vec<f64>,
    /// Advantages as used by the surrogate (after normalisation).
    pub advantages: Vec<f64>,
}

/// Rescales to zero mean and unit (population) standard deviation.
pub fn normalize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for v in values.iter_mut() {
        *v -= mean;
        if std > 1e-12 {
            *v /= std;
        }
    }
}

/// Runs one PPO update on `batch`, computing advantages from its rewards and values.
pub fn update(
    actor: &mut Actor,
    critic: &mut ValueNet,
    graph: &MorphologyGraph,
    batch: &TrajectoryBatch,
    config: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats> {
    batch.validate()?;
    let (advantages, returns) = batch.advantages(config.gamma, config.gae_lambda)?;
    update_with_advantages(actor, critic, graph, batch, advantages, &returns, config, rng)
}

#[allow(clippy::too_many_arguments)]
pub fn update_with_advantages(
    actor: &mut Actor,
    critic: &mut ValueNet,
    graph: &MorphologyGraph,
    batch: &TrajectoryBatch,
    mut advantages: Vec<f64>,
    returns: &[f64],
    config: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateStats> {
    config.validate()?;
    batch.validate()?;
    let n = batch.len();
    let dim = graph.num_joints();
    if n == 0 || !n.is_multiple_of(config.minibatches) {
        return Err(Error::Trainer(format!(
            "batch of {n} steps cannot be split into {} minibatches",
            config.minibatches
        )));
    }
    if advantages.len() != n || returns.len() != n {
        return Err(Error::Trainer("advantages/returns do not match the batch".into()));
    }
    if batch.action_dim() != dim || batch.observations.iter().any(|o| o.num_joints() != dim) {
        return Err(Error::Trainer(format!(
            "batch was collected on a different morphology than the {dim}-joint graph"
        )));
    }
    actor.check_graph(graph)?;
    if config.normalize_advantages {
        normalize(&mut advantages);
    }

    let mb_size = n / config.minibatches;
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats {
        ratios: vec![0.0; n],
        ..UpdateStats::default()
    };

    for epoch in 0..config.epochs {
        let final_epoch = epoch + 1 == config.epochs;
        order.shuffle(rng);
        let mut kl_sum = 0.0;
        let mut clipped = 0usize;
        let mut policy_loss = 0.0;
        let mut value_loss = 0.0;
        let mut l2_loss = 0.0;

        for idx in order.chunks(mb_size) {
            let obs: Vec<&Observation> = idx.iter().map(|&i| &batch.observations[i]).collect();

            // Policy step.
            let log_std = actor.log_std(dim);
            let inv_var: Vec<f64> = log_std.iter().map(|s| (-2.0 * s).exp()).collect();
            let mut grads = actor.store().zero_grads();
            let mut d_log_std = vec![-config.entropy_coef; dim];
            {
                let mut tape = Tape::new(actor.store());
                let means_var = actor.forward_means(&mut tape, graph, &obs)?;
                let means = tape.value(means_var);
                let mut seed = Tensor::zeros(means.rows(), means.cols());
                for (j, &i) in idx.iter().enumerate() {
                    let mu = &means.data()[j * dim..(j + 1) * dim];
                    let action = &batch.actions[i];
                    let new_lp = gaussian_log_prob(mu, &log_std, action);
                    let term = surrogate_term(new_lp, batch.old_log_probs[i], advantages[i], config.epsilon, i)?;
                    kl_sum += gaussian_kl(&batch.old_means[i], &batch.old_log_std, mu, &log_std);
                    policy_loss += term.loss / mb_size as f64;
                    clipped += usize::from(term.clipped);
                    if final_epoch {
                        stats.ratios[i] = term.ratio;
                    }
                    let g = term.grad_log_prob / mb_size as f64;
                    if g != 0.0 {
                        let s = &mut seed.data_mut()[j * dim..(j + 1) * dim];
                        for k in 0..dim {
                            let diff = action[k] - mu[k];
                            s[k] = g * diff * inv_var[k];
                            d_log_std[k] += g * (diff * diff * inv_var[k] - 1.0);
                        }
                    }
                }
                tape.backward(means_var, seed, &mut grads)?;
            }
            actor.add_log_std_grad(&mut grads, &d_log_std);
            if config.l2_lambda > 0.0 {
                if let Some(group) = actor.message_group() {
                    l2_loss = accumulate_l2(actor.store(), group, config.l2_lambda, &mut grads)?;
                }
            }
            adam_step(actor.store_mut(), &grads, config.base_lr, &config.adam)?;

            // Critic step.
            let mut vgrads = critic.store().zero_grads();
            {
                let mut tape = Tape::new(critic.store());
                let v = critic.forward(&mut tape, &obs)?;
                let values = tape.value(v);
                let mut seed = Tensor::zeros(values.rows(), 1);
                for (j, &i) in idx.iter().enumerate() {
                    let err = values.data()[j] - returns[i];
                    value_loss += err * err / n as f64;
                    seed.data_mut()[j] = 2.0 * err / mb_size as f64;
                }
                tape.backward(v, seed, &mut vgrads)?;
            }
            adam_step(critic.store_mut(), &vgrads, config.value_lr, &config.adam)?;
        }

        stats.epoch_kl.push(kl_sum / n as f64);
        stats.epoch_clip_fraction.push(clipped as f64 / n as f64);
        stats.epoch_value_loss.push(value_loss);
        if final_epoch {
            stats.clip_fraction = clipped as f64 / n as f64;
            stats.policy_loss = policy_loss / config.minibatches as f64;
            stats.value_loss = value_loss;
            stats.l2_loss = l2_loss;
        }
    }

    stats.mean_kl = batch_kl(actor, graph, batch)?;
    stats.advantages = advantages;
    Ok(stats)
}

/// Mean analytic KL from the batch's recorded policy to `actor`.
fn batch_kl(actor: &Actor, graph: &MorphologyGraph, batch: &TrajectoryBatch) -> Result<f64> {
    let dim = graph.num_joints();
    let log_std = actor.log_std(dim);
    let mut total = 0.0;
    for (c, part) in batch.observations.chunks(256).enumerate() {
        let refs: Vec<&Observation> = part.iter().collect();
        let mut tape = Tape::new(actor.store());
        let means = actor.forward_means(&mut tape, graph, &refs)?;
        let means = tape.value(means).data();
        for j in 0..part.len() {
            let i = c * 256 + j;
            total += gaussian_kl(&batch.old_means[i], &batch.old_log_std, &means[j * dim..(j + 1) * dim], &log_std);
        }
    }
    Ok(total / batch.len() as f64)
}
