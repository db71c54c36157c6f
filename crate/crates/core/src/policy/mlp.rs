use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ActionDistribution;
use crate::chainsim::Observation;
use crate::error::{Error, Result};
use crate::ndiff::{mlp, mlp_params, Param, ParameterGroup, ParameterStore, Tape, Tensor, Var};

const BODY: usize = 0;
const LOG_STD: usize = 1;

fn flat_batch(observations: &[&Observation], width: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(observations.len() * width);
    for o in observations {
        let before = data.len();
        o.write_flat(&mut data);
        if data.len() - before != width {
            return Err(Error::Shape(format!(
                "flat observation of width {} for a network expecting {width}",
                data.len() - before
            )));
        }
    }
    Tensor::from_vec(observations.len(), width, data)
}

/// Dense tanh policy over the flat observation, one output per joint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpPolicy {
    obs_width: usize,
    action_dim: usize,
    store: ParameterStore,
}

impl MlpPolicy {
    pub fn new<R: Rng + ?Sized>(num_joints: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        if num_joints == 0 {
            return Err(Error::Config("an MLP policy needs at least one joint".into()));
        }
        let obs_width = Observation::flat_width(num_joints);
        let mut widths = vec![obs_width];
        widths.extend_from_slice(hidden);
        widths.push(num_joints);
        let mut store = ParameterStore::new();
        store.add_group(ParameterGroup::new("body", mlp_params(&widths, rng)?))?;
        store.add_group(ParameterGroup::new(
            super::LOG_STD_GROUP,
            vec![Param::new("dims", Tensor::zeros(1, num_joints))],
        ))?;
        Ok(Self {
            obs_width,
            action_dim: num_joints,
            store,
        })
    }

    pub fn from_parts(num_joints: usize, store: ParameterStore) -> Result<Self> {
        let body = store.group("body").ok_or_else(|| Error::Checkpoint("MLP policy without a body group".into()))?;
        let log_std = store
            .group(super::LOG_STD_GROUP)
            .ok_or_else(|| Error::Checkpoint("MLP policy without log_std".into()))?;
        let obs_width = Observation::flat_width(num_joints);
        let first = body.params.first().map(|p| p.value.cols());
        if first != Some(obs_width) || log_std.params[0].value.len() != num_joints {
            return Err(Error::Checkpoint("MLP parameters do not match the joint count".into()));
        }
        Ok(Self {
            obs_width,
            action_dim: num_joints,
            store,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    pub fn log_std_group(&self) -> usize {
        LOG_STD
    }

    pub fn log_std(&self) -> &[f64] {
        self.store.group_at(LOG_STD).params[0].value.data()
    }

    /// Means as a `batch × action_dim` matrix.
    pub fn forward_means(&self, tape: &mut Tape<'_>, observations: &[&Observation]) -> Result<Var> {
        let x = tape.input(flat_batch(observations, self.obs_width)?);
        mlp(tape, BODY, x)
    }

    pub fn distribution(&self, obs: &Observation) -> Result<ActionDistribution> {
        let mut tape = Tape::new(&self.store);
        let means = self.forward_means(&mut tape, &[obs])?;
        ActionDistribution::new(tape.value(means).data().to_vec(), self.log_std().to_vec())
    }
}

/// State-value critic: dense tanh network on the flat observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueNet {
    obs_width: usize,
    store: ParameterStore,
}

impl ValueNet {
    pub fn new<R: Rng + ?Sized>(num_joints: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        let obs_width = Observation::flat_width(num_joints);
        let mut widths = vec![obs_width];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut store = ParameterStore::new();
        store.add_group(ParameterGroup::new("value", mlp_params(&widths, rng)?))?;
        Ok(Self { obs_width, store })
    }

    pub fn from_parts(num_joints: usize, store: ParameterStore) -> Result<Self> {
        let obs_width = Observation::flat_width(num_joints);
        match store.group("value").and_then(|g| g.params.first()) {
            Some(p) if p.value.cols() == obs_width => Ok(Self { obs_width, store }),
            _ => Err(Error::Checkpoint("value network does not match the joint count".into())),
        }
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    /// Values as a `batch × 1` matrix.
    pub fn forward(&self, tape: &mut Tape<'_>, observations: &[&Observation]) -> Result<Var> {
        let x = tape.input(flat_batch(observations, self.obs_width)?);
        mlp(tape, 0, x)
    }

    pub fn values(&self, observations: &[&Observation]) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.store);
        let v = self.forward(&mut tape, observations)?;
        Ok(tape.value(v).data().to_vec())
    }
}
