//! Deterministic parallel rollout collection.
//!
//! Each seed owns one [`RolloutStream`]: an environment plus the RNG used for
//! its action sampling and episode resets. A batch gives every stream a fixed
//! share of the timesteps, so the merged result depends only on the seed list
//! and never on how streams are spread over worker threads.

use std::collections::VecDeque;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Segment, TrajectoryBatch};
use crate::chainsim::{rollout, ChainEnv, EnvConfig, Observation};
use crate::error::{Error, Result};
use crate::policy::{PolicySnapshot, ValueNet};

/// Completed episode returns kept for the running reward statistic.
const RETURN_WINDOW: usize = 10;

#[derive(Clone, Debug)]
pub struct RolloutStream {
    env: ChainEnv,
    rng: ChaCha8Rng,
    episode_return: f64,
}

struct Chunk {
    observations: Vec<Observation>,
    actions: Vec<Vec<f64>>,
    means: Vec<Vec<f64>>,
    log_probs: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    completed: Vec<f64>,
    /// Observation to bootstrap from when the last step was not terminal.
    tail: Option<Observation>,
}

impl RolloutStream {
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let env = ChainEnv::new(config, rng.next_u64())?;
        Ok(Self {
            env,
            rng,
            episode_return: 0.0,
        })
    }

    pub fn env(&self) -> &ChainEnv {
        &self.env
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn episode_return(&self) -> f64 {
        self.episode_return
    }

    fn run(&mut self, snapshot: &PolicySnapshot, steps: usize) -> Result<Chunk> {
        let mut chunk = Chunk {
            observations: Vec::with_capacity(steps),
            actions: Vec::with_capacity(steps),
            means: Vec::with_capacity(steps),
            log_probs: Vec::with_capacity(steps),
            rewards: Vec::with_capacity(steps),
            dones: Vec::with_capacity(steps),
            completed: Vec::new(),
            tail: None,
        };
        while chunk.rewards.len() < steps {
            let traj = rollout(&mut self.env, snapshot, steps - chunk.rewards.len(), &mut self.rng)?;
            self.episode_return += traj.rewards.iter().sum::<f64>();
            let ended = traj.dones.last().copied().unwrap_or(false);
            chunk.observations.extend(traj.observations);
            chunk.actions.extend(traj.actions);
            chunk.means.extend(traj.means);
            chunk.log_probs.extend(traj.log_probs);
            chunk.rewards.extend(traj.rewards);
            chunk.dones.extend(traj.dones);
            if ended {
                chunk.completed.push(self.episode_return);
                self.episode_return = 0.0;
                let seed = self.rng.next_u64();
                self.env.reset(seed);
            } else {
                chunk.tail = traj.final_observation;
            }
        }
        if chunk.dones.last().copied().unwrap_or(true) {
            chunk.tail = None;
        }
        Ok(chunk)
    }
}

/// Splits `total` into `parts` shares that differ by at most one, larger first.
fn quotas(total: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|k| total / parts + usize::from(k < total % parts)).collect()
}

fn run_streams(
    streams: &mut [RolloutStream],
    snapshot: &PolicySnapshot,
    quotas: &[usize],
    n_workers: usize,
) -> Result<Vec<Chunk>> {
    let n_workers = n_workers.clamp(1, streams.len().max(1));
    if n_workers == 1 {
        return streams
            .iter_mut()
            .zip(quotas)
            .map(|(s, &q)| s.run(snapshot, q))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Worker {
                index: 0,
                source: Box::new(e),
            });
    }
    let per_worker = streams.len().div_ceil(n_workers);
    let results: Vec<Result<Vec<Chunk>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = streams
            .chunks_mut(per_worker)
            .zip(quotas.chunks(per_worker))
            .map(|(mine, q)| {
                scope.spawn(move || {
                    mine.iter_mut()
                        .zip(q)
                        .map(|(s, &steps)| s.run(snapshot, steps))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Env("rollout worker panicked".into()))))
            .collect()
    });
    let mut chunks = Vec::with_capacity(streams.len());
    for (index, r) in results.into_iter().enumerate() {
        chunks.extend(r.map_err(|e| Error::Worker {
            index,
            source: Box::new(e),
        })?);
    }
    Ok(chunks)
}

/// Persistent set of rollout streams used across training updates.
#[derive(Clone, Debug)]
pub struct Collector {
    streams: Vec<RolloutStream>,
    n_workers: usize,
    recent_returns: VecDeque<f64>,
}

impl Collector {
    pub fn new(env_config: &EnvConfig, seeds: &[u64], n_workers: usize) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::Config("rollout collection needs at least one stream seed".into()));
        }
        if n_workers == 0 {
            return Err(Error::Config("rollout collection needs at least one worker".into()));
        }
        let streams = seeds
            .iter()
            .map(|&s| RolloutStream::new(env_config.clone(), s))
            .collect::<Result<_>>()?;
        Ok(Self {
            streams,
            n_workers,
            recent_returns: VecDeque::with_capacity(RETURN_WINDOW),
        })
    }

    pub fn streams(&self) -> &[RolloutStream] {
        &self.streams
    }

    pub fn collect(&mut self, snapshot: &PolicySnapshot, critic: &ValueNet, batch_size: usize) -> Result<TrajectoryBatch> {
        let q = quotas(batch_size, self.streams.len());
        let chunks = run_streams(&mut self.streams, snapshot, &q, self.n_workers)?;

        let mut batch = TrajectoryBatch {
            old_log_std: snapshot.actor().log_std(snapshot.graph().num_joints()),
            ..TrajectoryBatch::default()
        };
        let mut tails = Vec::new();
        for chunk in chunks {
            let start = batch.len();
            batch.observations.extend(chunk.observations);
            batch.actions.extend(chunk.actions);
            batch.old_means.extend(chunk.means);
            batch.old_log_probs.extend(chunk.log_probs);
            batch.rewards.extend(chunk.rewards);
            batch.dones.extend(chunk.dones);
            batch.completed_returns.extend(chunk.completed);
            batch.segments.push(Segment {
                start,
                end: batch.rewards.len(),
                bootstrap_value: 0.0,
            });
            tails.push(chunk.tail);
        }

        let mut values = Vec::with_capacity(batch.len());
        for part in batch.observations.chunks(512) {
            let refs: Vec<&Observation> = part.iter().collect();
            values.extend(critic.values(&refs)?);
        }
        batch.values = values;
        let tail_obs: Vec<&Observation> = tails.iter().flatten().collect();
        let mut tail_values = critic.values(&tail_obs)?.into_iter();
        for (seg, tail) in batch.segments.iter_mut().zip(&tails) {
            if tail.is_some() {
                seg.bootstrap_value = tail_values.next().expect("one value per tail");
            }
        }

        for &r in &batch.completed_returns {
            if self.recent_returns.len() == RETURN_WINDOW {
                self.recent_returns.pop_front();
            }
            self.recent_returns.push_back(r);
        }
        Ok(batch)
    }

    /// Mean of the last few completed episode returns, or of the episodes in
    /// progress when none has finished yet.
    pub fn mean_episode_return(&self) -> f64 {
        if self.recent_returns.is_empty() {
            self.streams.iter().map(|s| s.episode_return).sum::<f64>() / self.streams.len() as f64
        } else {
            self.recent_returns.iter().sum::<f64>() / self.recent_returns.len() as f64
        }
    }
}

/// One batch from fresh streams seeded by `seeds`.
pub fn collect_batch(
    env_config: &EnvConfig,
    snapshot: &PolicySnapshot,
    critic: &ValueNet,
    batch_size: usize,
    n_workers: usize,
    seeds: &[u64],
) -> Result<TrajectoryBatch> {
    Collector::new(env_config, seeds, n_workers)?.collect(snapshot, critic, batch_size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphology::build_chain_graph;
    use crate::policy::{Actor, GnnConfig, GnnPolicy};

    fn fixture(n_links: usize) -> (EnvConfig, PolicySnapshot, ValueNet) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let config = GnnConfig {
            hidden_width: 8,
            encoder_hidden: vec![8],
            message_hidden: vec![8],
            decoder_hidden: vec![8],
            ..GnnConfig::default()
        };
        let actor = Actor::Gnn(GnnPolicy::new(config, &mut rng).unwrap());
        let graph = build_chain_graph(n_links).unwrap();
        let critic = ValueNet::new(n_links - 1, &[8], &mut rng).unwrap();
        (EnvConfig::new(n_links), PolicySnapshot::new(actor, graph).unwrap(), critic)
    }

    #[test]
    fn quotas_sum_to_total() {
        assert_eq!(quotas(10, 4), vec![3, 3, 2, 2]);
        assert_eq!(quotas(512, 1), vec![512]);
        assert_eq!(quotas(3, 5).iter().sum::<usize>(), 3);
    }

    #[test]
    fn worker_count_does_not_change_the_batch() {
        let (env, snap, critic) = fixture(4);
        let seeds = [11, 12, 13, 14, 15];
        let one = collect_batch(&env, &snap, &critic, 300, 1, &seeds).unwrap();
        let four = collect_batch(&env, &snap, &critic, 300, 4, &seeds).unwrap();
        assert_eq!(one, four);
        assert_eq!(one.len(), 300);
        one.validate().unwrap();
    }

    #[test]
    fn short_batches_truncate_with_bootstrap() {
        let (env, snap, critic) = fixture(3);
        let batch = collect_batch(&env, &snap, &critic, 512, 2, &[1, 2]).unwrap();
        assert_eq!(batch.len(), 512);
        for seg in &batch.segments {
            if !batch.dones[seg.end - 1] {
                assert_ne!(seg.bootstrap_value, 0.0);
            }
        }
    }

    #[test]
    fn episodes_reset_after_termination() {
        let (mut env, snap, critic) = fixture(3);
        env.horizon = 5;
        let batch = collect_batch(&env, &snap, &critic, 23, 1, &[7]).unwrap();
        assert_eq!(batch.dones.iter().filter(|&&d| d).count(), 4);
        assert_eq!(batch.completed_returns.len(), 4);
        assert_eq!(batch.segments[0].bootstrap_value == 0.0, batch.dones[22]);
    }

    #[test]
    fn rejects_empty_seed_list() {
        let (env, snap, critic) = fixture(3);
        assert!(collect_batch(&env, &snap, &critic, 8, 1, &[]).is_err());
    }
}
