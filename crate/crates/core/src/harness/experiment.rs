//! Seeded training runs.

use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, RngState};
use super::config::{ExperimentConfig, PolicyKind};
use super::record::{RunRecord, UpdateRow};
use crate::error::{Error, Result};
use crate::morphology::{build_chain_graph, MorphologyGraph};
use crate::policy::{Actor, GnnPolicy, MlpPolicy, PolicySnapshot, ValueNet};
use crate::ppo::{update, Collector, UpdateStats};

/// Environment variable capping rollout worker threads.
pub const THREADS_ENV: &str = "SNOWGRAPH_THREADS";

/// `requested` limited by [`THREADS_ENV`] when it holds a positive integer.
pub fn worker_cap(requested: usize) -> usize {
    match std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(cap) if cap > 0 => requested.min(cap),
        _ => requested,
    }
}

/// Builds the policy for `config`, drawing initial weights from `rng`.
pub fn build_actor(config: &ExperimentConfig, graph: &MorphologyGraph, rng: &mut ChaCha8Rng) -> Result<Actor> {
    let mut actor = match config.policy_kind {
        PolicyKind::Mlp => Actor::Mlp(MlpPolicy::new(graph.num_joints(), &config.mlp_hidden, rng)?),
        _ => Actor::Gnn(GnnPolicy::new(config.gnn_config(), rng)?),
    };
    for (group, &m) in &config.lr_multipliers {
        actor.store_mut().set_lr_multiplier(group, m)?;
    }
    Ok(actor)
}

/// The state of one seed's training run.
pub struct Trainer {
    config: ExperimentConfig,
    seed: u64,
    graph: MorphologyGraph,
    actor: Actor,
    critic: ValueNet,
    collector: Collector,
    rng: ChaCha8Rng,
    updates: usize,
    timesteps: usize,
}

impl Trainer {
    pub fn new(config: &ExperimentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let graph = build_chain_graph(config.env.n_links)?;
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let actor = build_actor(config, &graph, &mut master)?;
        let critic = ValueNet::new(graph.num_joints(), &config.value_hidden, &mut master)?;
        let stream_seeds: Vec<u64> = (0..config.streams).map(|_| master.next_u64()).collect();
        let rng = ChaCha8Rng::seed_from_u64(master.next_u64());
        let collector = Collector::new(&config.env, &stream_seeds, worker_cap(config.workers))?;
        Ok(Self {
            config: config.clone(),
            seed,
            graph,
            actor,
            critic,
            collector,
            rng,
            updates: 0,
            timesteps: 0,
        })
    }

    pub fn actor(&self) -> &Actor {
        &self.actor
    }

    pub fn critic(&self) -> &ValueNet {
        &self.critic
    }

    pub fn graph(&self) -> &MorphologyGraph {
        &self.graph
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn finished(&self) -> bool {
        self.timesteps >= self.config.total_timesteps
    }

    /// Collects one batch and runs one PPO update on it.
    pub fn step(&mut self) -> Result<(UpdateRow, UpdateStats)> {
        let snapshot = PolicySnapshot::new(self.actor.clone(), self.graph.clone())?;
        let batch = self.collector.collect(&snapshot, &self.critic, self.config.ppo.batch_size)?;
        let stats = update(&mut self.actor, &mut self.critic, &self.graph, &batch, &self.config.ppo, &mut self.rng)?;
        self.updates += 1;
        self.timesteps += batch.len();
        let row = UpdateRow {
            update: self.updates,
            timesteps: self.timesteps,
            mean_episode_reward: self.collector.mean_episode_return(),
            mean_kl: stats.mean_kl,
            clip_fraction: stats.clip_fraction,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            l2_loss: stats.l2_loss,
        };
        for (i, v) in [row.mean_episode_reward, row.mean_kl, row.policy_loss, row.value_loss].iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Numerical {
                    index: self.updates,
                    what: format!("update statistic #{i} is {v}"),
                });
            }
        }
        Ok((row, stats))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut rngs = vec![RngState::capture("update", &self.rng)];
        for (k, s) in self.collector.streams().iter().enumerate() {
            rngs.push(RngState::capture(format!("stream-{k}"), s.rng()));
        }
        Checkpoint {
            config: self.config.clone(),
            graph: self.graph.clone(),
            seed: self.seed,
            update: self.updates,
            timesteps: self.timesteps,
            policy: self.actor.store().clone(),
            value: self.critic.store().clone(),
            rngs,
        }
    }
}

/// Result of one seed: its log and, when training got going, the final state.
#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub record: RunRecord,
    pub final_checkpoint: Option<Checkpoint>,
    pub checkpoint_files: Vec<PathBuf>,
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed-{seed}"))
}

fn checkpoint_path(dir: &Path, update: usize) -> PathBuf {
    dir.join(format!("ckpt-{update:06}.snow"))
}

/// Trains one seed. Errors end the run early and are stored in the record.
pub fn run_seed(config: &ExperimentConfig, seed: u64) -> SeedOutcome {
    let mut outcome = SeedOutcome {
        record: RunRecord::new(config.hash(), config.policy_kind.as_str(), seed),
        final_checkpoint: None,
        checkpoint_files: Vec::new(),
    };
    let dir = config.output_dir.as_ref().map(|d| seed_dir(d, seed));
    if let Err(e) = train_seed(config, seed, dir.as_deref(), &mut outcome) {
        outcome.record.error = Some(format!("{}: {e}", e.category()));
    }
    if let Some(dir) = &dir {
        if let Err(e) = outcome.record.save(&dir.join("record.csv")) {
            outcome.record.error.get_or_insert_with(|| format!("{}: {e}", e.category()));
        }
    }
    outcome
}

fn train_seed(config: &ExperimentConfig, seed: u64, dir: Option<&Path>, outcome: &mut SeedOutcome) -> Result<()> {
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut trainer = Trainer::new(config, seed)?;
    let save = |trainer: &Trainer, outcome: &mut SeedOutcome| -> Result<Checkpoint> {
        let ckpt = trainer.checkpoint();
        if let Some(dir) = dir {
            let path = checkpoint_path(dir, trainer.updates());
            ckpt.save(&path)?;
            outcome.checkpoint_files.push(path);
        }
        Ok(ckpt)
    };
    let mut last = save(&trainer, outcome)?;
    while !trainer.finished() {
        let step = trainer.step();
        let (row, _) = match step {
            Ok(r) => r,
            Err(e) => {
                outcome.final_checkpoint = Some(trainer.checkpoint());
                return Err(e);
            }
        };
        outcome.record.push(row)?;
        let interval = config.checkpoint_interval;
        if (interval > 0 && trainer.updates() % interval == 0) || trainer.finished() {
            last = save(&trainer, outcome)?;
        }
    }
    outcome.final_checkpoint = Some(last);
    Ok(())
}

/// Cross-seed statistics at one update index.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub update: usize,
    pub timesteps: f64,
    pub seeds: usize,
    pub reward_mean: f64,
    pub reward_stderr: f64,
    pub kl_mean: f64,
    pub kl_stderr: f64,
    pub clip_mean: f64,
    pub clip_stderr: f64,
}

/// Mean and standard error of the mean (sample standard deviation).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Aligns records by row position and summarises each position across seeds.
pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let longest = records.iter().map(|r| r.rows().len()).max().unwrap_or(0);
    (0..longest)
        .map(|i| {
            let rows: Vec<_> = records.iter().filter_map(|r| r.rows().get(i)).collect();
            let col = |f: fn(&UpdateRow) -> f64| mean_stderr(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (reward_mean, reward_stderr) = col(|r| r.mean_episode_reward);
            let (kl_mean, kl_stderr) = col(|r| r.mean_kl);
            let (clip_mean, clip_stderr) = col(|r| r.clip_fraction);
            AggregateRow {
                update: rows[0].update,
                timesteps: col(|r| r.timesteps as f64).0,
                seeds: rows.len(),
                reward_mean,
                reward_stderr,
                kl_mean,
                kl_stderr,
                clip_mean,
                clip_stderr,
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub outcomes: Vec<SeedOutcome>,
    pub aggregate: Vec<AggregateRow>,
}

impl ExperimentResult {
    pub fn records(&self) -> Vec<RunRecord> {
        self.outcomes.iter().map(|o| o.record.clone()).collect()
    }
}

fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let header = [
        "update", "timesteps", "seeds", "reward_mean", "reward_stderr", "kl_mean", "kl_stderr", "clip_mean", "clip_stderr",
    ];
    let io = |e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record([
            r.update.to_string(),
            r.timesteps.to_string(),
            r.seeds.to_string(),
            r.reward_mean.to_string(),
            r.reward_stderr.to_string(),
            r.kl_mean.to_string(),
            r.kl_stderr.to_string(),
            r.clip_mean.to_string(),
            r.clip_stderr.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs every seed in `config` and aggregates the successful ones.
///
/// A seed that fails keeps its partial rows and error message; the others
/// still run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    if let Some(out) = &config.output_dir {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let path = out.join("config.txt");
        std::fs::write(&path, config.to_text()).map_err(|e| Error::io(&path, e))?;
    }
    let outcomes: Vec<SeedOutcome> = config.seeds.iter().map(|&s| run_seed(config, s)).collect();
    let ok: Vec<RunRecord> = outcomes
        .iter()
        .filter(|o| o.record.error.is_none())
        .map(|o| o.record.clone())
        .collect();
    let aggregate = aggregate(&ok);
    if let Some(out) = &config.output_dir {
        write_aggregate(&out.join("aggregate.csv"), &aggregate)?;
    }
    Ok(ExperimentResult { outcomes, aggregate })
}
