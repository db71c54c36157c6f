//! Experiment configs in a flat `key=value` text format with dotted keys.
//!
//! Blank lines and lines starting with `#` are ignored. Later assignments win,
//! which is how command-line overrides are layered over a file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::chainsim::EnvConfig;
use crate::error::{Error, Result};
use crate::policy::{Component, GnnConfig, LOG_STD_GROUP};
use crate::ppo::PpoConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Gnn,
    GnnSnowflake,
    Mlp,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Gnn => "gnn",
            PolicyKind::GnnSnowflake => "gnn_snowflake",
            PolicyKind::Mlp => "mlp",
        }
    }

    pub fn is_gnn(self) -> bool {
        !matches!(self, PolicyKind::Mlp)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gnn" => Ok(PolicyKind::Gnn),
            "gnn_snowflake" => Ok(PolicyKind::GnnSnowflake),
            "mlp" => Ok(PolicyKind::Mlp),
            _ => Err(Error::Config(format!("unknown policy kind '{s}' (gnn, gnn_snowflake, mlp)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub policy_kind: PolicyKind,
    /// Replaces the frozen set implied by `policy_kind`.
    pub freeze: Option<BTreeSet<Component>>,
    /// Learning-rate multipliers by parameter-group name.
    pub lr_multipliers: BTreeMap<String, f64>,
    pub env: EnvConfig,
    /// Architecture of the GNN; its `freeze` field is ignored in favour of [`Self::frozen_components`].
    pub gnn: GnnConfig,
    pub mlp_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub ppo: PpoConfig,
    pub total_timesteps: usize,
    pub seeds: Vec<u64>,
    /// Rollout streams per seed.
    pub streams: usize,
    pub workers: usize,
    /// Updates between checkpoints; 0 keeps only the initial and final ones.
    pub checkpoint_interval: usize,
    pub stochastic_eval: bool,
    /// Where records and checkpoints go. `None` keeps everything in memory.
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            policy_kind: PolicyKind::Gnn,
            freeze: None,
            lr_multipliers: BTreeMap::new(),
            env: EnvConfig::new(6),
            gnn: GnnConfig::default(),
            mlp_hidden: vec![64, 64],
            value_hidden: vec![64, 64],
            ppo: PpoConfig::default(),
            total_timesteps: 1_000_000,
            seeds: vec![0],
            streams: 1,
            workers: 1,
            checkpoint_interval: 0,
            stochastic_eval: false,
            output_dir: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got '{value}'"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.is_empty() || value == "none" {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_num(key, v.trim())).collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    if items.is_empty() {
        return "none".into();
    }
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Splits `key=value`, trimming both sides.
pub fn split_assignment(line: &str) -> Result<(&str, &str)> {
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("expected key=value, got '{line}'")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(Error::Config(format!("empty key in '{line}'")));
    }
    Ok((k, v.trim()))
}

impl ExperimentConfig {
    /// Parses a config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        config.apply_text(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = split_assignment(line).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Assigns one dotted key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let e = &mut self.env;
        let p = &mut self.ppo;
        match key {
            "policy" => self.policy_kind = value.parse()?,
            "freeze" => {
                self.freeze = match value {
                    "default" => None,
                    "none" | "" => Some(BTreeSet::new()),
                    _ => Some(value.split(',').map(|c| c.trim().parse()).collect::<Result<_>>()?),
                }
            }
            "env.n_links" => e.n_links = parse_num(key, value)?,
            "env.dt" => e.dt = parse_num(key, value)?,
            "env.damping" => e.damping = parse_num(key, value)?,
            "env.stiffness" => e.stiffness = parse_num(key, value)?,
            "env.inertia" => e.inertia = parse_num(key, value)?,
            "env.propulsion_gain" => e.propulsion_gain = parse_num(key, value)?,
            "env.torque_limit" => e.torque_limit = parse_num(key, value)?,
            "env.horizon" => e.horizon = parse_num(key, value)?,
            "env.forward_weight" => e.forward_weight = parse_num(key, value)?,
            "env.survival_weight" => e.survival_weight = parse_num(key, value)?,
            "env.action_weight" => e.action_weight = parse_num(key, value)?,
            "gnn.layers" => self.gnn.layers = parse_num(key, value)?,
            "gnn.hidden_width" => self.gnn.hidden_width = parse_num(key, value)?,
            "gnn.encoder_hidden" => self.gnn.encoder_hidden = parse_list(key, value)?,
            "gnn.message_hidden" => self.gnn.message_hidden = parse_list(key, value)?,
            "gnn.decoder_hidden" => self.gnn.decoder_hidden = parse_list(key, value)?,
            "mlp.hidden" => self.mlp_hidden = parse_list(key, value)?,
            "value.hidden" => self.value_hidden = parse_list(key, value)?,
            "ppo.epsilon" => p.epsilon = parse_num(key, value)?,
            "ppo.batch_size" => p.batch_size = parse_num(key, value)?,
            "ppo.minibatches" => p.minibatches = parse_num(key, value)?,
            "ppo.epochs" => p.epochs = parse_num(key, value)?,
            "ppo.gamma" => p.gamma = parse_num(key, value)?,
            "ppo.gae_lambda" => p.gae_lambda = parse_num(key, value)?,
            "ppo.base_lr" => p.base_lr = parse_num(key, value)?,
            "ppo.value_lr" => p.value_lr = parse_num(key, value)?,
            "ppo.l2_lambda" => p.l2_lambda = parse_num(key, value)?,
            "ppo.entropy_coef" => p.entropy_coef = parse_num(key, value)?,
            "ppo.normalize_advantages" => p.normalize_advantages = parse_bool(key, value)?,
            "train.total_timesteps" => self.total_timesteps = parse_num::<f64>(key, value).and_then(|t| {
                if t >= 0.0 && t.fract() == 0.0 {
                    Ok(t as usize)
                } else {
                    Err(Error::Config(format!("{key}: expected a whole number, got '{value}'")))
                }
            })?,
            "train.seeds" => self.seeds = parse_list(key, value)?,
            "train.streams" => self.streams = parse_num(key, value)?,
            "train.workers" => self.workers = parse_num(key, value)?,
            "train.checkpoint_interval" => self.checkpoint_interval = parse_num(key, value)?,
            "eval.stochastic" => self.stochastic_eval = parse_bool(key, value)?,
            "output.dir" => self.output_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            _ => match key.strip_prefix("lr.") {
                Some(group) if !group.is_empty() => {
                    self.lr_multipliers.insert(group.to_string(), parse_num(key, value)?);
                }
                _ => return Err(Error::Config(format!("unknown key '{key}'"))),
            },
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("train.seeds must list at least one seed".into()));
        }
        if self.streams == 0 || self.workers == 0 {
            return Err(Error::Config("train.streams and train.workers must be at least 1".into()));
        }
        self.env.validate()?;
        self.ppo.validate()?;
        self.gnn.validate()?;
        if self.value_hidden.contains(&0) || self.mlp_hidden.contains(&0) {
            return Err(Error::Config("MLP layer widths must be positive".into()));
        }
        for (group, &m) in &self.lr_multipliers {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::Config(format!("lr.{group} must be a finite non-negative number")));
            }
            let known = if self.policy_kind.is_gnn() {
                Component::ALL.iter().any(|c| c.group_name() == group) || group == LOG_STD_GROUP
            } else {
                group == "body" || group == LOG_STD_GROUP
            };
            if !known {
                return Err(Error::Config(format!("lr.{group}: no such parameter group for {}", self.policy_kind)));
            }
        }
        if self.freeze.as_ref().is_some_and(|f| !f.is_empty()) && !self.policy_kind.is_gnn() {
            return Err(Error::Config("freeze applies to GNN policies only".into()));
        }
        Ok(())
    }

    /// The frozen GNN components after applying the override.
    pub fn frozen_components(&self) -> BTreeSet<Component> {
        match (&self.freeze, self.policy_kind) {
            (Some(f), _) => f.clone(),
            (None, PolicyKind::GnnSnowflake) => Component::snowflake(),
            _ => BTreeSet::new(),
        }
    }

    pub fn gnn_config(&self) -> GnnConfig {
        GnnConfig {
            freeze: self.frozen_components(),
            ..self.gnn.clone()
        }
    }

    /// Canonical text form: every key, sorted, one per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            out.push_str(&k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }

    fn entries(&self) -> BTreeMap<String, String> {
        let e = &self.env;
        let p = &self.ppo;
        let mut m: BTreeMap<String, String> = [
            ("policy", self.policy_kind.to_string()),
            (
                "freeze",
                match &self.freeze {
                    None => "default".into(),
                    Some(f) => join(&f.iter().collect::<Vec<_>>()),
                },
            ),
            ("env.n_links", e.n_links.to_string()),
            ("env.dt", e.dt.to_string()),
            ("env.damping", e.damping.to_string()),
            ("env.stiffness", e.stiffness.to_string()),
            ("env.inertia", e.inertia.to_string()),
            ("env.propulsion_gain", e.propulsion_gain.to_string()),
            ("env.torque_limit", e.torque_limit.to_string()),
            ("env.horizon", e.horizon.to_string()),
            ("env.forward_weight", e.forward_weight.to_string()),
            ("env.survival_weight", e.survival_weight.to_string()),
            ("env.action_weight", e.action_weight.to_string()),
            ("gnn.layers", self.gnn.layers.to_string()),
            ("gnn.hidden_width", self.gnn.hidden_width.to_string()),
            ("gnn.encoder_hidden", join(&self.gnn.encoder_hidden)),
            ("gnn.message_hidden", join(&self.gnn.message_hidden)),
            ("gnn.decoder_hidden", join(&self.gnn.decoder_hidden)),
            ("mlp.hidden", join(&self.mlp_hidden)),
            ("value.hidden", join(&self.value_hidden)),
            ("ppo.epsilon", p.epsilon.to_string()),
            ("ppo.batch_size", p.batch_size.to_string()),
            ("ppo.minibatches", p.minibatches.to_string()),
            ("ppo.epochs", p.epochs.to_string()),
            ("ppo.gamma", p.gamma.to_string()),
            ("ppo.gae_lambda", p.gae_lambda.to_string()),
            ("ppo.base_lr", p.base_lr.to_string()),
            ("ppo.value_lr", p.value_lr.to_string()),
            ("ppo.l2_lambda", p.l2_lambda.to_string()),
            ("ppo.entropy_coef", p.entropy_coef.to_string()),
            ("ppo.normalize_advantages", p.normalize_advantages.to_string()),
            ("train.total_timesteps", self.total_timesteps.to_string()),
            ("train.seeds", join(&self.seeds)),
            ("train.streams", self.streams.to_string()),
            ("train.workers", self.workers.to_string()),
            ("train.checkpoint_interval", self.checkpoint_interval.to_string()),
            ("eval.stochastic", self.stochastic_eval.to_string()),
            (
                "output.dir",
                self.output_dir.as_ref().map(|d| d.display().to_string()).unwrap_or_default(),
            ),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        for (g, v) in &self.lr_multipliers {
            m.insert(format!("lr.{g}"), v.to_string());
        }
        m
    }

    /// SHA-256 over the canonical text of every field that affects results.
    ///
    /// The output directory and worker count are excluded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if k == "output.dir" || k == "train.workers" {
                continue;
            }
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}
