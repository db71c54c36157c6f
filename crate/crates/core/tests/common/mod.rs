#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use snowgraph::chainsim::{step, ChainState, EnvConfig, Observation};
use snowgraph::morphology::{MorphologyGraph, Node, NodeId, NodeType};
use snowgraph::ndiff::{ParamId, Tape, Tensor};
use snowgraph::policy::{GnnConfig, GnnPolicy};
use snowgraph::ppo::compute_gae;

pub fn small_gnn_config(width: usize, layers: usize) -> GnnConfig {
    GnnConfig {
        layers,
        hidden_width: width,
        encoder_hidden: vec![width],
        message_hidden: vec![width],
        decoder_hidden: vec![width],
        ..GnnConfig::default()
    }
}

/// A random tree on `n` nodes with shuffled ids and joint order.
pub fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> MorphologyGraph {
    let mut ids: Vec<u32> = (0..n as u32).map(|i| i * 3 + 1).collect();
    ids.shuffle(rng);
    let root = rng.gen_range(0..n);
    let nodes: Vec<Node> = ids
        .iter()
        .enumerate()
        .map(|(k, &id)| Node {
            id: NodeId(id),
            kind: if k == root { NodeType::Root } else { NodeType::Joint },
        })
        .collect();
    let mut edges = Vec::new();
    for k in 1..n {
        let parent = rng.gen_range(0..k);
        edges.push((NodeId(ids[k]), NodeId(ids[parent])));
        edges.push((NodeId(ids[parent]), NodeId(ids[k])));
    }
    let mut joints: Vec<NodeId> = nodes.iter().filter(|n| n.kind == NodeType::Joint).map(|n| n.id).collect();
    joints.shuffle(rng);
    MorphologyGraph::new(nodes, edges, joints).expect("valid random tree")
}

pub fn random_observation(rng: &mut ChaCha8Rng, joints: usize) -> Observation {
    Observation {
        joint_angles: (0..joints).map(|_| rng.gen_range(-1.2..1.2)).collect(),
        joint_velocities: (0..joints).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        forward_velocity: rng.gen_range(-0.5..0.5),
    }
}

/// log π(a | s) of a GNN policy for one observation.
pub fn gnn_log_prob(policy: &GnnPolicy, graph: &MorphologyGraph, obs: &Observation, action: &[f64]) -> f64 {
    policy.distribution(graph, obs).unwrap().log_prob(action).unwrap()
}

pub struct GradCheck {
    pub group: String,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheck {
    /// Relative error with a small absolute floor for near-zero gradients.
    pub fn rel_error(&self) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs()).max(1e-6);
        (self.analytic - self.numeric).abs() / scale
    }
}

/// Compares tape gradients of log π(a|s) through the whole GNN against central
/// differences, on a few random coordinates of every parameter group.
pub fn gnn_gradient_case(seed: u64, coords_per_group: usize) -> Vec<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=6);
    let graph = random_tree(&mut rng, n);
    let layers = rng.gen_range(1..=3);
    let mut policy = GnnPolicy::new(small_gnn_config(8, layers), &mut rng).unwrap();
    let log_std_id = ParamId {
        group: policy.log_std_group(),
        tensor: 0,
    };
    policy.store_mut().get_mut(log_std_id).data_mut()[0] = rng.gen_range(-0.7..0.3);
    let obs = random_observation(&mut rng, graph.num_joints());
    let action: Vec<f64> = (0..graph.num_joints()).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let mut grads = policy.store().zero_grads();
    {
        let mut tape = Tape::new(policy.store());
        let means_var = policy.forward_means(&mut tape, &graph, &[&obs]).unwrap();
        let means = tape.value(means_var).data().to_vec();
        let log_std = policy.log_std_param();
        let inv_var = (-2.0 * log_std).exp();
        let seed: Vec<f64> = means.iter().zip(&action).map(|(m, a)| (a - m) * inv_var).collect();
        tape.backward(means_var, Tensor::from_vec(means.len(), 1, seed).unwrap(), &mut grads)
            .unwrap();
        let d_log_std: f64 = means.iter().zip(&action).map(|(m, a)| (a - m) * (a - m) * inv_var - 1.0).sum();
        grads.get_mut(log_std_id).data_mut()[0] += d_log_std;
    }

    let h = 1e-6;
    let mut out = Vec::new();
    let ids: Vec<ParamId> = policy.store().param_ids().collect();
    for g in 0..policy.store().groups().len() {
        let in_group: Vec<ParamId> = ids.iter().copied().filter(|id| id.group == g).collect();
        for _ in 0..coords_per_group {
            let id = in_group[rng.gen_range(0..in_group.len())];
            let k = rng.gen_range(0..policy.store().get(id).len());
            let orig = policy.store().get(id).data()[k];
            policy.store_mut().get_mut(id).data_mut()[k] = orig + h;
            let up = gnn_log_prob(&policy, &graph, &obs, &action);
            policy.store_mut().get_mut(id).data_mut()[k] = orig - h;
            let down = gnn_log_prob(&policy, &graph, &obs, &action);
            policy.store_mut().get_mut(id).data_mut()[k] = orig;
            out.push(GradCheck {
                group: policy.store().group_at(g).name.clone(),
                analytic: grads.get(id).data()[k],
                numeric: (up - down) / (2.0 * h),
            });
        }
    }
    out
}

/// Σ_k (γλ)^k δ_{t+k} evaluated directly, stopping at episode ends.
pub fn brute_force_gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let delta: Vec<f64> = (0..n)
        .map(|t| {
            let next = if dones[t] { 0.0 } else { values[t + 1] };
            rewards[t] + gamma * next - values[t]
        })
        .collect();
    (0..n)
        .map(|t| {
            let mut total = 0.0;
            let mut weight = 1.0;
            for k in t..n {
                total += weight * delta[k];
                if dones[k] {
                    break;
                }
                weight *= gamma * lambda;
            }
            total
        })
        .collect()
}

/// Maximum |compute_gae − brute force| over a 3-episode reward sequence.
pub fn gae_oracle_error(gamma: f64, lambda: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let lengths = [7, 4, 9];
    let n: usize = lengths.iter().sum();
    let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let values: Vec<f64> = (0..=n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let mut dones = vec![false; n];
    let mut end = 0;
    for (i, l) in lengths.iter().enumerate() {
        end += l;
        // The last episode is cut off by the batch and bootstraps.
        if i < lengths.len() - 1 {
            dones[end - 1] = true;
        }
    }
    let (adv, ret) = compute_gae(&rewards, &values, &dones, gamma, lambda).unwrap();
    let oracle = brute_force_gae(&rewards, &values, &dones, gamma, lambda);
    let mut worst: f64 = 0.0;
    for t in 0..n {
        worst = worst.max((adv[t] - oracle[t]).abs());
        worst = worst.max((ret[t] - (oracle[t] + values[t])).abs());
    }
    worst
}

/// Net displacement from driving joint torques with a · sin(Ω t − i ψ).
pub fn traveling_wave_displacement(n_links: usize, amplitude: f64, omega: f64, psi: f64, steps: usize) -> f64 {
    let config = EnvConfig {
        horizon: steps + 1,
        ..EnvConfig::new(n_links)
    };
    let joints = config.num_joints();
    let mut state = ChainState {
        angles: vec![0.0; joints],
        velocities: vec![0.0; joints],
        position: 0.0,
        t: 0,
    };
    for s in 0..steps {
        let time = s as f64 * config.dt;
        let action: Vec<f64> = (0..joints).map(|i| amplitude * (omega * time - i as f64 * psi).sin()).collect();
        let tr = step(&config, &state, &action).unwrap();
        assert!(!tr.done, "wave drive left the joint limits at step {s}");
        state = tr.state;
    }
    state.position
}

/// A batch of random states with actions drawn from `actor`, whose recorded
/// log-probs are perturbed so the first epoch already sees ratios away from 1.
pub fn synthetic_batch(
    actor: &snowgraph::policy::Actor,
    graph: &MorphologyGraph,
    n: usize,
    seed: u64,
) -> snowgraph::ppo::TrajectoryBatch {
    use snowgraph::ppo::{Segment, TrajectoryBatch};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = graph.num_joints();
    let mut batch = TrajectoryBatch {
        old_log_std: actor.log_std(dim),
        ..TrajectoryBatch::default()
    };
    for t in 0..n {
        let obs = random_observation(&mut rng, dim);
        let dist = actor.distribution(graph, &obs).unwrap();
        let action = dist.sample(&mut rng);
        batch.old_log_probs.push(dist.log_prob(&action).unwrap() + rng.gen_range(-0.3..0.3));
        batch.old_means.push(dist.mean.clone());
        batch.actions.push(action);
        batch.observations.push(obs);
        batch.rewards.push(rng.gen_range(-1.0..1.0));
        batch.values.push(0.0);
        batch.dones.push((t + 1) % 50 == 0);
    }
    batch.segments.push(Segment {
        start: 0,
        end: n,
        bootstrap_value: 0.0,
    });
    batch
}
