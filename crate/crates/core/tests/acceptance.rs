//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use snowgraph::chainsim::{step, ChainState, EnvConfig};
use snowgraph::harness::{
    run_seed, run_sweep, transfer_eval, Checkpoint, ExperimentConfig, PolicyKind, RunRecord, SeedOutcome, SweepAxis,
    Trainer,
};
use snowgraph::morphology::{build_chain_graph, factor_observation, MorphologyGraph, Node, NodeId};
use snowgraph::policy::{Actor, GnnConfig, GnnPolicy, PolicySnapshot, ValueNet, LOG_STD_GROUP};
use snowgraph::ppo::{collect_batch, surrogate_loss, update, PpoConfig};

use common::{gae_oracle_error, gnn_gradient_case, random_observation, synthetic_batch, traveling_wave_displacement};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

const GRAD_TOL: f64 = 1e-4;
const EQUIVARIANCE_TOL: f64 = 1e-10;
const GAE_TOL: f64 = 1e-12;

/// Shared settings of the training experiments (criteria 8 to 10).
const TRAIN_SEEDS: [u64; 3] = [0, 1, 2];
const TRAIN_CONFIG: &str = "\
env.n_links=12
gnn.layers=4
gnn.hidden_width=16
gnn.encoder_hidden=16
gnn.message_hidden=16
gnn.decoder_hidden=16
mlp.hidden=64,64
value.hidden=64,64
ppo.batch_size=1024
train.total_timesteps=300000
";

const SWEEP_SEEDS: &str = "0,1,2,3,4";
const SWEEP_CONFIG: &str = "\
policy=gnn
env.n_links=6
gnn.layers=4
gnn.hidden_width=16
gnn.encoder_hidden=16
gnn.message_hidden=16
gnn.decoder_hidden=16
value.hidden=64,64
ppo.batch_size=1024
train.total_timesteps=51200
";

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: u32, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let in_time = limit.is_none_or(|l| took <= l);
    let pass = out.pass && in_time;
    let budget = match limit {
        Some(l) if !in_time => format!(" over budget {:.0?}", l),
        _ => String::new(),
    };
    println!(
        "criterion {id:>2} {:<4} {name}: {} [{:.1?}{budget}]",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        took
    );
    std::io::stdout().flush().ok();
    pass
}

fn gradient_oracle() -> Outcome {
    let mut worst = 0.0f64;
    let mut by_group: BTreeMap<String, f64> = BTreeMap::new();
    for case in 0..100 {
        for c in gnn_gradient_case(case, 3) {
            let e = c.rel_error();
            worst = worst.max(e);
            let slot = by_group.entry(c.group.clone()).or_default();
            *slot = slot.max(e);
        }
    }
    let groups: Vec<String> = by_group.iter().map(|(g, e)| format!("{g} {e:.1e}")).collect();
    Outcome {
        pass: worst <= GRAD_TOL && by_group.len() == 5,
        detail: format!("100 cases, worst relative error {worst:.2e} <= {GRAD_TOL:e} ({})", groups.join(", ")),
    }
}

fn freezing_contract() -> Outcome {
    let config = ExperimentConfig::parse(
        "policy=gnn_snowflake\nenv.n_links=6\ngnn.hidden_width=16\ngnn.encoder_hidden=16\ngnn.message_hidden=16\n\
         gnn.decoder_hidden=16\nppo.batch_size=512\ntrain.total_timesteps=25600",
    )
    .unwrap();
    let mut trainer = Trainer::new(&config, 0).unwrap();
    let init = trainer.actor().store().clone();
    while !trainer.finished() {
        trainer.step().unwrap();
    }
    let fin = trainer.actor().store();
    let same = |g: &str| init.group(g) == fin.group(g);
    let frozen_ok = ["encoder", "message", "decoder"].iter().all(|g| same(g));
    let moved_ok = !same("update") && !same(LOG_STD_GROUP);
    Outcome {
        pass: trainer.updates() == 50 && frozen_ok && moved_ok,
        detail: format!(
            "{} updates; encoder/message/decoder identical: {frozen_ok}; update and log_std changed: {moved_ok}",
            trainer.updates()
        ),
    }
}

fn policy_bytes(kind: &str, n_links: usize) -> usize {
    let mut c = ExperimentConfig::parse(&format!("policy={kind}")).unwrap();
    c.env.n_links = n_links;
    Trainer::new(&c, 0).unwrap().checkpoint().policy.to_le_bytes().len()
}

fn size_independence() -> Outcome {
    let gnn: Vec<usize> = [6, 12, 20].iter().map(|&n| policy_bytes("gnn", n)).collect();
    let mlp: Vec<usize> = [6, 12, 20].iter().map(|&n| policy_bytes("mlp", n)).collect();
    Outcome {
        pass: gnn.windows(2).all(|w| w[0] == w[1]) && mlp.windows(2).all(|w| w[0] < w[1]),
        detail: format!("GNN bytes {gnn:?}, MLP bytes {mlp:?}"),
    }
}

fn equivariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let policy = GnnPolicy::new(GnnConfig::default(), &mut rng).unwrap();
    let graph = build_chain_graph(10).unwrap();
    let obs = random_observation(&mut rng, graph.num_joints());
    let outputs = |g: &MorphologyGraph| policy.gnn_forward(g, &factor_observation(g, &obs).unwrap()).unwrap();
    let base = outputs(&graph);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let mut perm: Vec<u32> = (0..10).collect();
        perm.shuffle(&mut rng);
        let map = |id: NodeId| NodeId(perm[id.0 as usize]);
        let mut nodes: Vec<Node> = graph.nodes().iter().map(|n| Node { id: map(n.id), kind: n.kind }).collect();
        nodes.shuffle(&mut rng);
        let mut edges: Vec<_> = graph.edges().iter().map(|&(a, b)| (map(a), map(b))).collect();
        edges.shuffle(&mut rng);
        let joints = graph.joint_order().iter().map(|&j| map(j)).collect();
        let relabelled = MorphologyGraph::new(nodes, edges, joints).unwrap();
        let out = outputs(&relabelled);
        for (id, v) in &base {
            worst = worst.max((v - out[&map(*id)]).abs());
        }
    }
    Outcome {
        pass: worst <= EQUIVARIANCE_TOL,
        detail: format!("50 relabelings of a 10-node chain, max deviation {worst:.1e} <= {EQUIVARIANCE_TOL:e}"),
    }
}

fn ppo_arithmetic() -> Outcome {
    let (upper, upper_clipped) = surrogate_loss(1.3f64.ln(), 0.0, 2.0, 0.1).unwrap();
    let (lower, lower_clipped) = surrogate_loss(0.8f64.ln(), 0.0, -1.0, 0.1).unwrap();
    let boundary_ok = upper == -2.2 && upper_clipped && lower == 0.9 && lower_clipped;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let graph = build_chain_graph(6).unwrap();
    let mut actor = Actor::Gnn(GnnPolicy::new(common::small_gnn_config(8, 2), &mut rng).unwrap());
    let mut critic = ValueNet::new(5, &[16], &mut rng).unwrap();
    let batch = synthetic_batch(&actor, &graph, 2048, 11);
    let cfg = PpoConfig {
        batch_size: 2048,
        ..PpoConfig::default()
    };
    let stats = update(&mut actor, &mut critic, &graph, &batch, &cfg, &mut rng).unwrap();
    let eps = cfg.epsilon;
    let recount = stats
        .ratios
        .iter()
        .zip(&stats.advantages)
        .filter(|(&r, &a)| (a > 0.0 && r > 1.0 + eps) || (a < 0.0 && r < 1.0 - eps))
        .count();
    let recount_ok = stats.clip_fraction == recount as f64 / 2048.0 && stats.ratios.len() == 2048;
    Outcome {
        pass: boundary_ok && recount_ok,
        detail: format!(
            "loss(1.3,0.1,2)={upper} clipped={upper_clipped}; loss(0.8,0.1,-1)={lower} clipped={lower_clipped}; \
             clip_fraction {} = recount {recount}/2048",
            stats.clip_fraction
        ),
    }
}

fn gae_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for gamma in [0.99, 1.0] {
        for lambda in [0.0, 0.95, 1.0] {
            worst = worst.max(gae_oracle_error(gamma, lambda));
        }
    }
    Outcome {
        pass: worst <= GAE_TOL,
        detail: format!("6 (gamma, lambda) pairs, max deviation from forward sum {worst:.1e} <= {GAE_TOL:e}"),
    }
}

fn physics() -> Outcome {
    let config = EnvConfig::new(6);
    let zero = ChainState {
        angles: vec![0.0; 5],
        velocities: vec![0.0; 5],
        position: 0.0,
        t: 0,
    };
    let tr = step(&config, &zero, &[0.0; 5]).unwrap();
    let fixed = tr.state.angles == zero.angles
        && tr.state.velocities == zero.velocities
        && tr.state.position == 0.0
        && tr.reward == 0.05
        && !tr.done;

    let single = EnvConfig::new(2);
    let mut s = ChainState {
        angles: vec![0.0],
        velocities: vec![0.0],
        position: 0.0,
        t: 0,
    };
    let mut single_zero = true;
    for k in 0..500 {
        let tr = step(&single, &s, &[(k as f64 * 0.1).sin()]).unwrap();
        single_zero &= tr.terms.forward == 0.0 && tr.state.position == 0.0;
        s = tr.state;
    }
    let y = traveling_wave_displacement(6, 0.3, 2.0, std::f64::consts::FRAC_PI_4, 500);
    Outcome {
        pass: fixed && single_zero && y > 0.0,
        detail: format!("fixed point exact: {fixed}; single joint thrust zero: {single_zero}; traveling wave y = {y:.4} > 0"),
    }
}

fn determinism() -> Outcome {
    let config = ExperimentConfig::parse(
        "policy=gnn_snowflake\nenv.n_links=6\ngnn.hidden_width=16\ngnn.encoder_hidden=16\ngnn.message_hidden=16\n\
         gnn.decoder_hidden=16\nppo.batch_size=512\ntrain.total_timesteps=5120\ntrain.streams=4\ntrain.workers=4",
    )
    .unwrap();
    let a = run_seed(&config, 7);
    let b = run_seed(&config, 7);
    let mut single = config.clone();
    single.workers = 1;
    let c = run_seed(&single, 7);
    let records_ok = a.record == b.record && a.record == c.record && a.record.rows().len() == 10;

    let ckpt = a.final_checkpoint.clone().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("final.snow");
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let ckpt_ok = loaded == ckpt
        && loaded.to_bytes() == ckpt.to_bytes()
        && loaded.policy.to_le_bytes() == ckpt.policy.to_le_bytes()
        && loaded.value.to_le_bytes() == ckpt.value.to_le_bytes();

    let actor = ckpt.actor().unwrap();
    let critic = ckpt.critic().unwrap();
    let snapshot = PolicySnapshot::new(actor, ckpt.graph.clone()).unwrap();
    let seeds = [3, 1, 4, 1, 5, 9, 2, 6];
    let one = collect_batch(&config.env, &snapshot, &critic, 2048, 1, &seeds).unwrap();
    let four = collect_batch(&config.env, &snapshot, &critic, 2048, 4, &seeds).unwrap();
    let collect_ok = one == four && one.len() == 2048;
    Outcome {
        pass: records_ok && ckpt_ok && collect_ok,
        detail: format!(
            "identical RunRecords: {records_ok}; checkpoint round trip bit-exact: {ckpt_ok}; 4 vs 1 worker batches equal: {collect_ok}"
        ),
    }
}

struct TrainingRuns {
    gnn: Vec<SeedOutcome>,
    snowflake: Vec<SeedOutcome>,
    mlp: Vec<SeedOutcome>,
}

fn train_all() -> TrainingRuns {
    let run_kind = |kind: PolicyKind| -> Vec<SeedOutcome> {
        let mut c = ExperimentConfig::parse(TRAIN_CONFIG).unwrap();
        c.policy_kind = kind;
        TRAIN_SEEDS
            .iter()
            .map(|&s| {
                let start = Instant::now();
                let out = run_seed(&c, s);
                let r = &out.record;
                println!(
                    "    {kind} seed {s}: {} updates, final-window reward {:.3}, kl {:.2e}, clip {:.4}{} [{:.0?}]",
                    r.rows().len(),
                    r.final_reward(),
                    r.final_kl(),
                    r.final_clip_fraction(),
                    r.error.as_deref().map(|e| format!(", error {e}")).unwrap_or_default(),
                    start.elapsed()
                );
                std::io::stdout().flush().ok();
                out
            })
            .collect()
    };
    TrainingRuns {
        gnn: run_kind(PolicyKind::Gnn),
        snowflake: run_kind(PolicyKind::GnnSnowflake),
        mlp: run_kind(PolicyKind::Mlp),
    }
}

fn records_ok(runs: &[SeedOutcome]) -> bool {
    runs.iter().all(|o| o.record.error.is_none() && !o.record.rows().is_empty())
}

fn count_wins(a: &[SeedOutcome], b: &[SeedOutcome], better: impl Fn(&RunRecord, &RunRecord) -> bool) -> usize {
    a.iter().zip(b).filter(|(x, y)| better(&x.record, &y.record)).count()
}

fn table1_direction(runs: &TrainingRuns) -> Outcome {
    let kl_wins = count_wins(&runs.snowflake, &runs.gnn, |s, g| s.final_kl() < g.final_kl());
    let clip_wins = count_wins(&runs.snowflake, &runs.gnn, |s, g| s.final_clip_fraction() < g.final_clip_fraction());
    let ok = records_ok(&runs.gnn) && records_ok(&runs.snowflake);
    Outcome {
        pass: ok && kl_wins >= 2 && clip_wins >= 2,
        detail: format!("Snowflake KL lower on {kl_wins}/3 seeds, clip fraction lower on {clip_wins}/3 seeds (need >= 2 each)"),
    }
}

fn reward_direction(runs: &TrainingRuns) -> Outcome {
    let wins = count_wins(&runs.snowflake, &runs.gnn, |s, g| s.final_reward() >= g.final_reward());
    let mean = |v: &[SeedOutcome]| v.iter().map(|o| o.record.final_reward()).sum::<f64>() / v.len() as f64;
    let ok = records_ok(&runs.gnn) && records_ok(&runs.snowflake) && records_ok(&runs.mlp);
    Outcome {
        pass: ok && wins >= 2,
        detail: format!(
            "Snowflake reward >= GNN on {wins}/3 seeds (need >= 2); mean final-window reward GNN {:.3}, Snowflake {:.3}, MLP {:.3}",
            mean(&runs.gnn),
            mean(&runs.snowflake),
            mean(&runs.mlp)
        ),
    }
}

fn transfer_structure(runs: &TrainingRuns) -> Outcome {
    let (Some(sf), Some(mlp)) = (&runs.snowflake[0].final_checkpoint, &runs.mlp[0].final_checkpoint) else {
        return Outcome {
            pass: false,
            detail: "training produced no final checkpoint".into(),
        };
    };
    let sizes = [6, 8, 10, 12, 14];
    let table = transfer_eval(sf, &sizes, 3, 0);
    let gnn_ok = table.as_ref().is_ok_and(|t| t.len() == 5 && t.iter().all(|r| r.mean_reward.is_finite()));
    let mlp_errors: Vec<bool> = sizes
        .iter()
        .filter(|&&n| n != 12)
        .map(|&n| matches!(transfer_eval(mlp, &[n], 1, 0), Err(e) if e.category() == "incompatible-morphology"))
        .collect();
    let mlp_home = transfer_eval(mlp, &[12], 1, 0).is_ok();
    let rewards = table
        .map(|t| t.iter().map(|r| format!("n={} {:.2}", r.n_links, r.mean_reward)).collect::<Vec<_>>().join(", "))
        .unwrap_or_else(|e| format!("error {e}"));
    let at_home = runs.snowflake[0].record.final_reward();
    Outcome {
        pass: gnn_ok && mlp_errors.iter().all(|&e| e) && mlp_home,
        detail: format!(
            "Snowflake evaluates on all sizes ({rewards}; training final-window {at_home:.2}); MLP errors on {}/4 other sizes, runs at n=12: {mlp_home}",
            mlp_errors.iter().filter(|&&e| e).count()
        ),
    }
}

fn epsilon_sweep() -> Outcome {
    let mut base = ExperimentConfig::parse(SWEEP_CONFIG).unwrap();
    base.set("train.seeds", SWEEP_SEEDS).unwrap();
    let result = run_sweep(&base, SweepAxis::Epsilon, &["0.05".to_string(), "0.2".to_string()]).unwrap();
    let per_seed = |i: usize| -> Vec<f64> {
        match &result.points[i].result {
            Ok(r) => r.outcomes.iter().map(|o| o.record.final_kl()).collect(),
            Err(_) => Vec::new(),
        }
    };
    let (small, large) = (per_seed(0), per_seed(1));
    let wins = small.iter().zip(&large).filter(|(a, b)| a <= b).count();
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(" ");
    Outcome {
        pass: small.len() == 5 && large.len() == 5 && wins >= 4,
        detail: format!(
            "KL(0.05) <= KL(0.2) on {wins}/5 seeds (need >= 4); eps=0.05 [{}], eps=0.2 [{}]",
            fmt(&small),
            fmt(&large)
        ),
    }
}

fn main() {
    let minutes = |m: u64| Some(Duration::from_secs(60 * m));
    let mut results = vec![
        report(1, "gradient oracle", minutes(1), gradient_oracle),
        report(2, "freezing contract", minutes(5), freezing_contract),
        report(3, "size-independent parameters", None, size_independence),
        report(4, "permutation equivariance", None, equivariance),
        report(5, "PPO arithmetic", None, ppo_arithmetic),
        report(6, "GAE oracle", None, gae_oracle),
        report(7, "environment physics", Some(Duration::from_secs(1)), physics),
        report(12, "determinism and persistence", minutes(5), determinism),
    ];

    let start = Instant::now();
    println!("    training GNN, Snowflake and MLP on n_links=12 (3 seeds each)");
    let runs = train_all();
    let train_time = start.elapsed();
    let over = train_time > Duration::from_secs(45 * 60);
    results.push(report(8, "KL and clip-fraction direction", None, || {
        let mut o = table1_direction(&runs);
        o.detail.push_str(&format!("; training took {train_time:.0?} (budget ~45 min){}", if over { ", over" } else { "" }));
        o
    }));
    results.push(report(9, "reward direction", None, || reward_direction(&runs)));
    results.push(report(10, "transfer structure", minutes(2), || transfer_structure(&runs)));
    results.push(report(11, "epsilon sweep direction", minutes(30), epsilon_sweep));

    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
