//! Versioned checkpoints: a JSON header followed by a little-endian `f64` payload.
//!
//! Layout: the 8-byte magic `SNOWCKPT`, the header length as `u64` LE, the
//! UTF-8 JSON header, then every tensor's row-major values. Within a store,
//! each group contributes its parameters, then Adam first moments, then
//! second moments.

use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, PolicyKind};
use crate::error::{Error, Result};
use crate::morphology::{GraphSpec, MorphologyGraph};
use crate::ndiff::{AdamState, Param, ParameterGroup, ParameterStore, Tensor};
use crate::policy::{Actor, GnnPolicy, MlpPolicy, ValueNet};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"SNOWCKPT";

/// Serialisable position of a ChaCha8 generator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub label: String,
    pub seed: String,
    pub stream: u64,
    /// Decimal, since JSON numbers cannot hold 128 bits.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(label: impl Into<String>, rng: &ChaCha8Rng) -> Self {
        Self {
            label: label.into(),
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let bad = || Error::Checkpoint(format!("corrupt rng state '{}'", self.label));
        let seed: [u8; 32] = hex::decode(&self.seed).ok().and_then(|s| s.try_into().ok()).ok_or_else(bad)?;
        let word_pos: u128 = self.word_pos.parse().map_err(|_| bad())?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(word_pos);
        Ok(rng)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub graph: MorphologyGraph,
    pub seed: u64,
    pub update: usize,
    pub timesteps: usize,
    pub policy: ParameterStore,
    pub value: ParameterStore,
    pub rngs: Vec<RngState>,
}

#[derive(Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct GroupMeta {
    name: String,
    frozen: bool,
    lr_multiplier: f64,
    adam_step: u64,
    tensors: Vec<TensorMeta>,
}

#[derive(Serialize, Deserialize)]
struct StoreMeta {
    name: String,
    groups: Vec<GroupMeta>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    code_version: String,
    config: String,
    morphology: GraphSpec,
    seed: u64,
    update: usize,
    timesteps: usize,
    stores: Vec<StoreMeta>,
    rngs: Vec<RngState>,
}

fn store_meta(name: &str, store: &ParameterStore) -> StoreMeta {
    StoreMeta {
        name: name.into(),
        groups: store
            .groups()
            .iter()
            .map(|g| GroupMeta {
                name: g.name.clone(),
                frozen: g.frozen,
                lr_multiplier: g.lr_multiplier,
                adam_step: g.adam.step,
                tensors: g
                    .params
                    .iter()
                    .map(|p| TensorMeta {
                        name: p.name.clone(),
                        rows: p.value.rows(),
                        cols: p.value.cols(),
                    })
                    .collect(),
            })
            .collect(),
    }
}

fn write_store(out: &mut Vec<u8>, store: &ParameterStore) {
    for g in store.groups() {
        let tensors = g.params.iter().map(|p| &p.value).chain(&g.adam.first_moment).chain(&g.adam.second_moment);
        for t in tensors {
            for x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
}

struct Payload<'a> {
    bytes: &'a [u8],
}

impl Payload<'_> {
    fn take(&mut self, rows: usize, cols: usize) -> Result<Tensor> {
        let n = rows * cols;
        if self.bytes.len() < n * 8 {
            return Err(Error::Checkpoint("payload is truncated".into()));
        }
        let (head, rest) = self.bytes.split_at(n * 8);
        self.bytes = rest;
        let data = head
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Tensor::from_vec(rows, cols, data)
    }

    fn read_store(&mut self, meta: &StoreMeta) -> Result<ParameterStore> {
        let mut store = ParameterStore::new();
        for g in &meta.groups {
            let mut take_all = || -> Result<Vec<Tensor>> { g.tensors.iter().map(|t| self.take(t.rows, t.cols)).collect() };
            let values = take_all()?;
            let first_moment = take_all()?;
            let second_moment = take_all()?;
            let params = g.tensors.iter().zip(values).map(|(t, v)| Param::new(t.name.clone(), v)).collect();
            let mut group = ParameterGroup::new(g.name.clone(), params);
            group.frozen = g.frozen;
            group.lr_multiplier = g.lr_multiplier;
            group.adam = AdamState {
                step: g.adam_step,
                first_moment,
                second_moment,
            };
            store.add_group(group).map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        Ok(store)
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            version: CHECKPOINT_VERSION,
            code_version: super::record::code_version(),
            config: self.config.to_text(),
            morphology: self.graph.spec().clone(),
            seed: self.seed,
            update: self.update,
            timesteps: self.timesteps,
            stores: vec![store_meta("policy", &self.policy), store_meta("value", &self.value)],
            rngs: self.rngs.clone(),
        };
        let json = serde_json::to_vec_pretty(&header).expect("header serialises");
        let mut out = Vec::with_capacity(16 + json.len() + 24 * (self.policy.num_scalars() + self.value.num_scalars()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        write_store(&mut out, &self.policy);
        write_store(&mut out, &self.value);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Checkpoint("not a snowgraph checkpoint".into()));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let json = bytes
            .get(16..16usize.saturating_add(len))
            .ok_or_else(|| Error::Checkpoint("header is truncated".into()))?;
        let value: serde_json::Value =
            serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        let version = value.get("version").and_then(serde_json::Value::as_u64);
        if version != Some(u64::from(CHECKPOINT_VERSION)) {
            return Err(Error::Checkpoint(format!(
                "format version {version:?} is not supported (expected {CHECKPOINT_VERSION})"
            )));
        }
        let header: Header = serde_json::from_value(value).map_err(|e| Error::Checkpoint(format!("header: {e}")))?;
        let [policy_meta, value_meta] = header.stores.as_slice() else {
            return Err(Error::Checkpoint("expected policy and value stores".into()));
        };
        let mut payload = Payload {
            bytes: &bytes[16 + len..],
        };
        let policy = payload.read_store(policy_meta)?;
        let value = payload.read_store(value_meta)?;
        if !payload.bytes.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing payload bytes", payload.bytes.len())));
        }
        let graph = MorphologyGraph::try_from(header.morphology).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let config = ExperimentConfig::parse(&header.config).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(Self {
            config,
            graph,
            seed: header.seed,
            update: header.update,
            timesteps: header.timesteps,
            policy,
            value,
            rngs: header.rngs,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Rebuilds the policy this checkpoint was taken from.
    pub fn actor(&self) -> Result<Actor> {
        match self.config.policy_kind {
            PolicyKind::Mlp => Ok(Actor::Mlp(MlpPolicy::from_parts(self.graph.num_joints(), self.policy.clone())?)),
            _ => Ok(Actor::Gnn(GnnPolicy::from_parts(self.config.gnn_config(), self.policy.clone())?)),
        }
    }

    pub fn critic(&self) -> Result<ValueNet> {
        ValueNet::from_parts(self.graph.num_joints(), self.value.clone())
    }

    pub fn rng(&self, label: &str) -> Result<ChaCha8Rng> {
        self.rngs
            .iter()
            .find(|r| r.label == label)
            .ok_or_else(|| Error::Checkpoint(format!("no rng state '{label}'")))?
            .restore()
    }
}
