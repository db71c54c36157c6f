//! Message-passing policy over a morphology graph.
//!
//! Initial node states come from a shared encoder applied to each node's
//! input label. Each propagation layer sums a message MLP of every sender's
//! state into its receivers and feeds the sum to a GRU that updates the
//! receiver. The message MLP and GRU are shared across layers. A decoder maps
//! final states to one scalar per node; joint outputs become action means.
//!
//! Parameter count depends only on widths, never on the graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ActionDistribution;
use crate::chainsim::Observation;
use crate::error::{Error, Result};
use crate::morphology::{factor_observation, MorphologyGraph, NodeFeatures, NodeId, FEATURE_WIDTH};
use crate::ndiff::{gru, gru_params, mlp, mlp_params, Param, ParameterGroup, ParameterStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Encoder,
    Message,
    Update,
    Decoder,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::Encoder,
        Component::Message,
        Component::Update,
        Component::Decoder,
    ];

    pub fn group_name(self) -> &'static str {
        match self {
            Component::Encoder => "encoder",
            Component::Message => "message",
            Component::Update => "update",
            Component::Decoder => "decoder",
        }
    }

    /// The frozen set used by Snowflake training.
    pub fn snowflake() -> BTreeSet<Component> {
        BTreeSet::from([Component::Encoder, Component::Message, Component::Decoder])
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.group_name())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Component::ALL
            .into_iter()
            .find(|c| c.group_name() == s)
            .ok_or_else(|| Error::Config(format!("unknown GNN component '{s}'")))
    }
}

pub const LOG_STD_GROUP: &str = "log_std";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    /// Propagation layers.
    pub layers: usize,
    pub hidden_width: usize,
    pub encoder_hidden: Vec<usize>,
    pub message_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub freeze: BTreeSet<Component>,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            hidden_width: 64,
            encoder_hidden: vec![64],
            message_hidden: vec![64],
            decoder_hidden: vec![64],
            freeze: BTreeSet::new(),
        }
    }
}

impl GnnConfig {
    pub fn snowflake() -> Self {
        Self {
            freeze: Component::snowflake(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 {
            return Err(Error::Config("gnn.hidden_width must be at least 1".into()));
        }
        let all = [&self.encoder_hidden, &self.message_hidden, &self.decoder_hidden];
        if all.iter().any(|w| w.contains(&0)) {
            return Err(Error::Config("GNN MLP layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnPolicy {
    config: GnnConfig,
    store: ParameterStore,
}

const ENCODER: usize = 0;
const MESSAGE: usize = 1;
const UPDATE: usize = 2;
const DECODER: usize = 3;
const LOG_STD: usize = 4;

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

impl GnnPolicy {
    pub fn new<R: Rng + ?Sized>(config: GnnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_width;
        let mut store = ParameterStore::new();
        store.add_group(ParameterGroup::new(
            "encoder",
            mlp_params(&widths(FEATURE_WIDTH, &config.encoder_hidden, h), rng)?,
        ))?;
        store.add_group(ParameterGroup::new(
            "message",
            mlp_params(&widths(h, &config.message_hidden, h), rng)?,
        ))?;
        store.add_group(ParameterGroup::new("update", gru_params(h, h, rng)?))?;
        store.add_group(ParameterGroup::new(
            "decoder",
            mlp_params(&widths(h, &config.decoder_hidden, 1), rng)?,
        ))?;
        store.add_group(ParameterGroup::new(
            LOG_STD_GROUP,
            vec![Param::new("joint", Tensor::zeros(1, 1))],
        ))?;
        for c in &config.freeze {
            store.set_frozen(c.group_name(), true)?;
        }
        Ok(Self { config, store })
    }

    /// Rebuilds a policy around stored parameters, checking their layout.
    pub fn from_parts(config: GnnConfig, store: ParameterStore) -> Result<Self> {
        let names: Vec<&str> = store.groups().iter().map(|g| g.name.as_str()).collect();
        if names != ["encoder", "message", "update", "decoder", LOG_STD_GROUP] {
            return Err(Error::Checkpoint(format!("unexpected GNN parameter groups {names:?}")));
        }
        let fresh = Self::new(config.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
        for (a, b) in fresh.store.groups().iter().zip(store.groups()) {
            let same = a.params.len() == b.params.len()
                && a.params.iter().zip(&b.params).all(|(x, y)| x.value.shape() == y.value.shape());
            if !same {
                return Err(Error::Checkpoint(format!("group '{}' does not match the GNN config", a.name)));
            }
        }
        Ok(Self { config, store })
    }

    pub fn config(&self) -> &GnnConfig {
        &self.config
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    pub fn log_std_param(&self) -> f64 {
        self.store.group_at(LOG_STD).params[0].value.data()[0]
    }

    pub fn log_std_group(&self) -> usize {
        LOG_STD
    }

    pub fn message_group(&self) -> usize {
        MESSAGE
    }

    /// Per-node outputs for a batch of samples sharing one graph.
    ///
    /// Rows are `sample * num_nodes + node_position`, one column.
    pub fn forward_nodes(&self, tape: &mut Tape<'_>, graph: &MorphologyGraph, features: &[NodeFeatures]) -> Result<Var> {
        let n = graph.num_nodes();
        let mut input = Vec::with_capacity(features.len() * n * FEATURE_WIDTH);
        for f in features {
            if f.num_nodes() != n {
                return Err(Error::Shape(format!(
                    "features cover {} nodes, graph has {n}",
                    f.num_nodes()
                )));
            }
            f.extend_into(&mut input);
        }
        let rows = features.len() * n;
        let x = tape.input(Tensor::from_vec(rows, FEATURE_WIDTH, input)?);

        let mut h = mlp(tape, ENCODER, x)?;
        if self.config.layers > 0 {
            let pairs: Rc<[(usize, usize)]> = (0..features.len())
                .flat_map(|b| graph.edge_positions().iter().map(move |&(s, r)| (b * n + s, b * n + r)))
                .collect();
            for _ in 0..self.config.layers {
                let outgoing = mlp(tape, MESSAGE, h)?;
                let m = tape.scatter_sum(outgoing, pairs.clone(), rows)?;
                h = gru(tape, UPDATE, h, m)?;
            }
        }
        mlp(tape, DECODER, h)
    }

    /// Action means for a batch of observations, rows `sample * num_joints + k`.
    pub fn forward_means(&self, tape: &mut Tape<'_>, graph: &MorphologyGraph, observations: &[&Observation]) -> Result<Var> {
        let features = observations
            .iter()
            .map(|o| factor_observation(graph, o))
            .collect::<Result<Vec<_>>>()?;
        let nodes = self.forward_nodes(tape, graph, &features)?;
        let n = graph.num_nodes();
        let rows: Rc<[usize]> = (0..observations.len())
            .flat_map(|b| graph.joint_positions().iter().map(move |&p| b * n + p))
            .collect();
        tape.gather_rows(nodes, rows)
    }

    /// Scalar output for every node of a single sample.
    pub fn gnn_forward(&self, graph: &MorphologyGraph, features: &NodeFeatures) -> Result<BTreeMap<NodeId, f64>> {
        let mut tape = Tape::new(&self.store);
        let out = self.forward_nodes(&mut tape, graph, std::slice::from_ref(features))?;
        Ok(graph
            .nodes()
            .iter()
            .zip(tape.value(out).data())
            .map(|(node, &v)| (node.id, v))
            .collect())
    }

    pub fn distribution(&self, graph: &MorphologyGraph, obs: &Observation) -> Result<ActionDistribution> {
        let mut tape = Tape::new(&self.store);
        let means = self.forward_means(&mut tape, graph, &[obs])?;
        let mean = tape.value(means).data().to_vec();
        let log_std = vec![self.log_std_param(); mean.len()];
        ActionDistribution::new(mean, log_std)
    }
}
