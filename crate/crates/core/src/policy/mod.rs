//! Policies: the message-passing GNN policy, the dense MLP baseline, and the
//! critic used by the trainer.

mod distribution;
mod gnn;
mod mlp;

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

pub use distribution::{gaussian_kl, gaussian_log_prob, kl_divergence, ActionDistribution};
pub use gnn::{Component, GnnConfig, GnnPolicy, LOG_STD_GROUP};
pub use mlp::{MlpPolicy, ValueNet};

use crate::chainsim::{ActionSample, Controller, Observation};
use crate::error::{Error, Result};
use crate::morphology::MorphologyGraph;
use crate::ndiff::{Gradients, ParamId, ParameterStore, Tape, Var};

/// Either policy family behind one interface.
#[derive(Clone, Debug, PartialEq)]
pub enum Actor {
    Gnn(GnnPolicy),
    Mlp(MlpPolicy),
}

impl Actor {
    pub fn store(&self) -> &ParameterStore {
        match self {
            Actor::Gnn(p) => p.store(),
            Actor::Mlp(p) => p.store(),
        }
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        match self {
            Actor::Gnn(p) => p.store_mut(),
            Actor::Mlp(p) => p.store_mut(),
        }
    }

    pub fn is_size_independent(&self) -> bool {
        matches!(self, Actor::Gnn(_))
    }

    pub fn check_graph(&self, graph: &MorphologyGraph) -> Result<()> {
        match self {
            Actor::Mlp(p) if p.action_dim() != graph.num_joints() => Err(Error::IncompatibleMorphology(format!(
                "MLP policy drives {} joints, morphology has {}",
                p.action_dim(),
                graph.num_joints()
            ))),
            _ => Ok(()),
        }
    }

    /// Action means for a batch; the tensor's data is sample-major with
    /// `graph.num_joints()` entries per sample.
    pub fn forward_means(&self, tape: &mut Tape<'_>, graph: &MorphologyGraph, observations: &[&Observation]) -> Result<Var> {
        match self {
            Actor::Gnn(p) => p.forward_means(tape, graph, observations),
            Actor::Mlp(p) => {
                self.check_graph(graph)?;
                p.forward_means(tape, observations)
            }
        }
    }

    pub fn log_std(&self, action_dim: usize) -> Vec<f64> {
        match self {
            Actor::Gnn(p) => vec![p.log_std_param(); action_dim],
            Actor::Mlp(p) => p.log_std().to_vec(),
        }
    }

    pub fn log_std_group(&self) -> usize {
        match self {
            Actor::Gnn(p) => p.log_std_group(),
            Actor::Mlp(p) => p.log_std_group(),
        }
    }

    /// Adds a per-action-dimension log_std gradient onto the stored parameters.
    pub fn add_log_std_grad(&self, grads: &mut Gradients, per_dim: &[f64]) {
        let id = ParamId {
            group: self.log_std_group(),
            tensor: 0,
        };
        let g = grads.get_mut(id).data_mut();
        match self {
            Actor::Gnn(_) => g[0] += per_dim.iter().sum::<f64>(),
            Actor::Mlp(_) => {
                for (a, b) in g.iter_mut().zip(per_dim) {
                    *a += b;
                }
            }
        }
    }

    /// Group regularised by the L2 term, if this policy has a message function.
    pub fn message_group(&self) -> Option<usize> {
        match self {
            Actor::Gnn(p) => Some(p.message_group()),
            Actor::Mlp(_) => None,
        }
    }

    pub fn distribution(&self, graph: &MorphologyGraph, obs: &Observation) -> Result<ActionDistribution> {
        match self {
            Actor::Gnn(p) => p.distribution(graph, obs),
            Actor::Mlp(p) => {
                self.check_graph(graph)?;
                p.distribution(obs)
            }
        }
    }
}

/// Immutable view of a policy handed to rollout workers.
#[derive(Clone, Debug)]
pub struct PolicySnapshot {
    actor: Arc<Actor>,
    graph: Arc<MorphologyGraph>,
    deterministic: bool,
}

impl PolicySnapshot {
    pub fn new(actor: Actor, graph: MorphologyGraph) -> Result<Self> {
        actor.check_graph(&graph)?;
        Ok(Self {
            actor: Arc::new(actor),
            graph: Arc::new(graph),
            deterministic: false,
        })
    }

    /// Acts with the distribution mean instead of sampling.
    pub fn deterministic(mut self, on: bool) -> Self {
        self.deterministic = on;
        self
    }

    pub fn actor(&self) -> &Actor {
        &self.actor
    }

    pub fn graph(&self) -> &MorphologyGraph {
        &self.graph
    }
}

impl Controller for PolicySnapshot {
    fn action_dim(&self) -> usize {
        self.graph.num_joints()
    }

    fn act(&self, obs: &Observation, rng: &mut ChaCha8Rng) -> Result<ActionSample> {
        let dist = self.actor.distribution(&self.graph, obs)?;
        let action = if self.deterministic {
            dist.mean.clone()
        } else {
            dist.sample(rng)
        };
        let log_prob = dist.log_prob(&action)?;
        Ok(ActionSample {
            action,
            mean: dist.mean,
            log_prob,
        })
    }
}
