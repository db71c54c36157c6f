//! Zero-shot evaluation of a trained policy on other chain lengths.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::experiment::mean_stderr;
use crate::chainsim::{rollout, ChainEnv};
use crate::error::{Error, Result};
use crate::morphology::build_chain_graph;
use crate::policy::PolicySnapshot;

#[derive(Clone, Debug, PartialEq)]
pub struct TransferRow {
    pub n_links: usize,
    pub episodes: usize,
    pub mean_reward: f64,
    pub stderr: f64,
}

/// Evaluates the checkpoint's policy for `episodes` full episodes on each chain size.
///
/// Actions are distribution means unless the checkpoint's config asks for
/// stochastic evaluation. Every size is checked before any episode runs.
pub fn transfer_eval(checkpoint: &Checkpoint, sizes: &[usize], episodes: usize, seed: u64) -> Result<Vec<TransferRow>> {
    if episodes == 0 {
        return Err(Error::Config("transfer evaluation needs at least one episode".into()));
    }
    let actor = checkpoint.actor()?;
    let graphs = sizes
        .iter()
        .map(|&n| {
            let g = build_chain_graph(n)?;
            actor.check_graph(&g)?;
            Ok(g)
        })
        .collect::<Result<Vec<_>>>()?;

    let deterministic = !checkpoint.config.stochastic_eval;
    let mut rows = Vec::with_capacity(sizes.len());
    for (&n, graph) in sizes.iter().zip(graphs) {
        let mut env_config = checkpoint.config.env.clone();
        env_config.n_links = n;
        let horizon = env_config.horizon;
        let snapshot = PolicySnapshot::new(actor.clone(), graph)?.deterministic(deterministic);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut env = ChainEnv::new(env_config, rng.next_u64())?;
        let mut returns = Vec::with_capacity(episodes);
        for _ in 0..episodes {
            env.reset(rng.next_u64());
            let traj = rollout(&mut env, &snapshot, horizon, &mut rng)?;
            returns.push(traj.rewards.iter().sum());
        }
        let (mean_reward, stderr) = mean_stderr(&returns);
        rows.push(TransferRow {
            n_links: n,
            episodes,
            mean_reward,
            stderr,
        });
    }
    Ok(rows)
}
