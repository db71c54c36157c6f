//! Planar chain-locomotion environment.
//!
//! `n_links` bodies joined by `n_links - 1` torque-driven hinges. Each joint
//! is a damped, spring-loaded rotor integrated with semi-implicit Euler.
//! Forward motion comes only from phase-lagged oscillation of neighbouring
//! joints: a joint moving while its predecessor is bent pushes the body along
//! y. A single joint moving on its own produces no thrust.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub n_links: usize,
    pub dt: f64,
    pub damping: f64,
    pub stiffness: f64,
    pub inertia: f64,
    pub propulsion_gain: f64,
    pub torque_limit: f64,
    pub horizon: usize,
    pub forward_weight: f64,
    pub survival_weight: f64,
    pub action_weight: f64,
}

impl EnvConfig {
    pub fn new(n_links: usize) -> Self {
        Self {
            n_links,
            dt: 0.05,
            damping: 0.5,
            stiffness: 0.2,
            inertia: 1.0,
            propulsion_gain: 1.0,
            torque_limit: 1.0,
            horizon: 1000,
            forward_weight: 1.0,
            survival_weight: 0.05,
            action_weight: 1e-4,
        }
    }

    pub fn num_joints(&self) -> usize {
        self.n_links.saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dt", self.dt),
            ("damping", self.damping),
            ("stiffness", self.stiffness),
            ("inertia", self.inertia),
            ("propulsion_gain", self.propulsion_gain),
            ("torque_limit", self.torque_limit),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("env.{name} must be positive, got {v}")));
            }
        }
        let weights = [
            ("forward_weight", self.forward_weight),
            ("survival_weight", self.survival_weight),
            ("action_weight", self.action_weight),
        ];
        for (name, v) in weights {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("env.{name} must be non-negative, got {v}")));
            }
        }
        if self.n_links == 0 {
            return Err(Error::Config("env.n_links must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("env.horizon must be at least 1".into()));
        }
        Ok(())
    }
}

/// Joint-limit magnitude beyond which an episode ends.
pub const ANGLE_LIMIT: f64 = std::f64::consts::FRAC_PI_2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub angles: Vec<f64>,
    pub velocities: Vec<f64>,
    pub position: f64,
    pub t: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub joint_angles: Vec<f64>,
    pub joint_velocities: Vec<f64>,
    pub forward_velocity: f64,
}

impl Observation {
    /// `[angles…, velocities…, forward velocity]`
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.joint_angles.len() + 1);
        self.write_flat(&mut out);
        out
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.joint_angles);
        out.extend_from_slice(&self.joint_velocities);
        out.push(self.forward_velocity);
    }

    pub fn flat_width(num_joints: usize) -> usize {
        2 * num_joints + 1
    }

    pub fn num_joints(&self) -> usize {
        self.joint_angles.len()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardTerms {
    pub forward: f64,
    pub survival: f64,
    pub action_cost: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.forward + self.survival - self.action_cost
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: ChainState,
    pub observation: Observation,
    pub reward: f64,
    pub terms: RewardTerms,
    pub done: bool,
}

pub fn reset(config: &EnvConfig, seed: u64) -> (ChainState, Observation) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.num_joints();
    let angles: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect();
    let state = ChainState {
        angles,
        velocities: vec![0.0; n],
        position: 0.0,
        t: 0,
    };
    let observation = observe(&state, 0.0);
    (state, observation)
}

fn observe(state: &ChainState, forward_velocity: f64) -> Observation {
    Observation {
        joint_angles: state.angles.clone(),
        joint_velocities: state.velocities.clone(),
        forward_velocity,
    }
}

/// Forward velocity produced by a joint configuration: the mean over
/// neighbouring pairs of `ω[i+1] · sin φ[i]`.
pub fn propulsion(config: &EnvConfig, angles: &[f64], velocities: &[f64]) -> f64 {
    let n = angles.len();
    if n < 2 {
        return 0.0;
    }
    let sum: f64 = (0..n - 1).map(|i| velocities[i + 1] * angles[i].sin()).sum();
    config.propulsion_gain * sum / (n - 1) as f64
}

pub fn step(config: &EnvConfig, state: &ChainState, action: &[f64]) -> Result<Transition> {
    let n = config.num_joints();
    if action.len() != n || state.angles.len() != n {
        return Err(Error::Env(format!(
            "action has {} entries, chain has {n} joints",
            action.len()
        )));
    }
    let mut angles = state.angles.clone();
    let mut velocities = state.velocities.clone();
    for i in 0..n {
        let torque = action[i].clamp(-config.torque_limit, config.torque_limit);
        let accel = (torque - config.damping * velocities[i] - config.stiffness * angles[i]) / config.inertia;
        velocities[i] += config.dt * accel;
        angles[i] += config.dt * velocities[i];
    }
    let vy = propulsion(config, &angles, &velocities);
    let violated = angles.iter().any(|a| a.abs() > ANGLE_LIMIT);
    let t = state.t + 1;
    let done = violated || t >= config.horizon;

    let terms = RewardTerms {
        forward: config.forward_weight * vy,
        survival: if violated { 0.0 } else { config.survival_weight },
        action_cost: config.action_weight * action.iter().map(|a| a * a).sum::<f64>(),
    };
    let next = ChainState {
        angles,
        velocities,
        position: state.position + config.dt * vy,
        t,
    };
    if !next.position.is_finite() || next.velocities.iter().any(|v| !v.is_finite()) {
        return Err(Error::Env("state became non-finite".into()));
    }
    let observation = observe(&next, vy);
    Ok(Transition {
        state: next,
        observation,
        reward: terms.total(),
        terms,
        done,
    })
}

/// Stateful wrapper used by rollout workers.
#[derive(Clone, Debug)]
pub struct ChainEnv {
    config: EnvConfig,
    state: ChainState,
    observation: Observation,
}

impl ChainEnv {
    pub fn new(config: EnvConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (state, observation) = reset(&config, seed);
        Ok(Self {
            config,
            state,
            observation,
        })
    }

    pub fn reset(&mut self, seed: u64) -> &Observation {
        let (state, observation) = reset(&self.config, seed);
        self.state = state;
        self.observation = observation;
        &self.observation
    }

    pub fn step(&mut self, action: &[f64]) -> Result<Transition> {
        let tr = step(&self.config, &self.state, action)?;
        self.state = tr.state.clone();
        self.observation = tr.observation.clone();
        Ok(tr)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn observation(&self) -> &Observation {
        &self.observation
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionSample {
    pub action: Vec<f64>,
    pub mean: Vec<f64>,
    pub log_prob: f64,
}

/// Anything that can pick actions for a chain of a fixed size.
pub trait Controller {
    fn action_dim(&self) -> usize;
    fn act(&self, obs: &Observation, rng: &mut ChaCha8Rng) -> Result<ActionSample>;
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub observations: Vec<Observation>,
    pub actions: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Observation after the last recorded step.
    pub final_observation: Option<Observation>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Runs `controller` from the environment's current state until the episode
/// ends or `max_steps` steps have been taken.
pub fn rollout<C: Controller + ?Sized>(
    env: &mut ChainEnv,
    controller: &C,
    max_steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    if controller.action_dim() != env.config.num_joints() {
        return Err(Error::Env(format!(
            "controller drives {} joints, chain has {}",
            controller.action_dim(),
            env.config.num_joints()
        )));
    }
    let mut traj = Trajectory::default();
    for _ in 0..max_steps {
        let obs = env.observation().clone();
        let sample = controller.act(&obs, rng)?;
        let tr = env.step(&sample.action)?;
        traj.observations.push(obs);
        traj.actions.push(sample.action);
        traj.means.push(sample.mean);
        traj.log_probs.push(sample.log_prob);
        traj.rewards.push(tr.reward);
        traj.dones.push(tr.done);
        if tr.done {
            break;
        }
    }
    traj.final_observation = Some(env.observation().clone());
    Ok(traj)
}
