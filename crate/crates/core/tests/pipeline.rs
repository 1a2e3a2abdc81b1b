mod common;

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use bdq_core::agents::{Agent, AgentConfig, AgentKind, Exploration, NetworkConfig};
use bdq_core::envs::{ContinuousActionSpec, DiscretizedActionSpace, EnvConfig};
use bdq_core::harness::{
    build, emit, read_seed_csv, run, train_seed, ExperimentConfig, Manifest, AGGREGATE_HEADER,
    SEED_HEADER,
};
use bdq_core::learning::{compute_targets, loss, train_step, LearnBatch, LossMode, TargetMode, TrainSchedule};
use bdq_core::replay::{PriorityConfig, Replay, ReplayKind, Transition};

use common::tiny_experiment;

fn params_of(agent: &Agent) -> Vec<Vec<f64>> {
    agent
        .learners()
        .iter()
        .flat_map(|l| l.online().params().into_iter().map(|p| p.values().to_vec()))
        .collect()
}

fn warmup_config(episodes: u32) -> ExperimentConfig {
    let mut agent = AgentConfig::new(AgentKind::Bdq, 3);
    agent.network = NetworkConfig {
        shared_sizes: vec![16],
        branch_hidden: 8,
        ..NetworkConfig::default()
    };
    let env = EnvConfig {
        horizon: Some(100),
        reach_radius: Some(1e-6),
        ..EnvConfig::new("pointmass-2")
    };
    ExperimentConfig {
        total_episodes: episodes,
        seeds: vec![1],
        eval_every: episodes,
        eval_episodes: 2,
        ..ExperimentConfig::new(env, agent)
    }
}

#[test]
fn no_update_before_warmup() {
    let before = warmup_config(9);
    let trained = train_seed(&before, 1).unwrap();
    assert_eq!(trained.record.total_steps, 900);
    let (_, fresh) = build(&before.resolved().unwrap(), 1).unwrap();
    assert_eq!(params_of(&trained.agent), params_of(&fresh));
    assert!(trained.record.step_losses.is_empty());

    let after = train_seed(&warmup_config(11), 1).unwrap();
    assert_eq!(after.record.total_steps, 1100);
    assert_eq!(after.agent.updates(), 1100 - 999);
    assert_ne!(params_of(&after.agent), params_of(&fresh));
}

fn random_transition(rng: &mut ChaCha8Rng, dims: usize, bins: usize) -> Transition {
    let state: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    Transition {
        next_state: state.iter().map(|s| s + rng.random_range(-0.1..0.1)).collect(),
        state,
        action: (0..dims).map(|_| rng.random_range(0..bins)).collect(),
        reward: rng.random_range(-1.0..0.0),
        done: rng.random_bool(0.1),
    }
}

/// After one training step every sampled slot holds `Σ_d |y_d − Q_d| + ε`,
/// recomputed here from copies of the networks taken before the update.
#[test]
fn priorities_are_summed_branch_errors() {
    for target_mode in [TargetMode::GlobalMean, TargetMode::PerDim, TargetMode::GlobalMax] {
        let (dims, bins) = (3, 5);
        let mut config = AgentConfig::new(AgentKind::Bdq, bins);
        config.network = NetworkConfig {
            shared_sizes: vec![12],
            branch_hidden: 6,
            ..NetworkConfig::default()
        };
        config.learner.td.target_mode = target_mode;
        config.schedule = TrainSchedule {
            batch_size: 8,
            warmup_steps: 0,
        };
        let space = DiscretizedActionSpace::build_grid(&ContinuousActionSpec::symmetric(dims, 1.0).unwrap(), bins).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut agent = Agent::new(&config, 4, space, 1000, &mut rng).unwrap();
        let priority = PriorityConfig {
            capacity: 64,
            ..PriorityConfig::default()
        };
        let mut replay = Replay::new(ReplayKind::Prioritized, priority).unwrap();
        for _ in 0..40 {
            replay.add(random_transition(&mut rng, dims, bins));
        }
        let learner = agent.learners()[0].clone();
        let mut sample_rng = ChaCha8Rng::seed_from_u64(99);
        let expected = {
            let sample = replay.sample(8, priority.beta(5), &mut sample_rng.clone()).unwrap();
            let batch = LearnBatch::from_sample(&sample, |a| a.to_vec()).unwrap();
            let targets = compute_targets(learner.online(), learner.target(), &batch, &learner.config().td).unwrap();
            let q = learner.online().infer(&batch.states).unwrap();
            let errors: Vec<f64> = (0..batch.len())
                .map(|b| {
                    (0..dims)
                        .map(|d| (targets[b][d] - q.q[d].row(b)[batch.actions[b][d]]).abs())
                        .sum()
                })
                .collect();
            sample.indices.into_iter().zip(errors).collect::<Vec<_>>()
        };
        train_step(&mut agent, &mut replay, &config.schedule, &priority, 5, &mut sample_rng).unwrap();
        let Replay::Prioritized(p) = &replay else { unreachable!() };
        let mut last = std::collections::HashMap::new();
        for (i, e) in expected {
            last.insert(i, e);
        }
        for (i, e) in last {
            let stored = p.priority(i).unwrap();
            assert!((stored - (e + 1e-8)).abs() < 1e-12, "{target_mode:?} slot {i}: {stored} vs {e}");
        }
    }
}

/// With one action dimension and no trunk rescale, the independent ensemble
/// and the branching network are the same learner.
#[test]
fn single_dimension_ensemble_matches_branching() {
    let make = |kind| {
        let mut c = AgentConfig::new(kind, 5);
        c.network = NetworkConfig {
            shared_sizes: vec![12, 8],
            branch_hidden: 6,
            trunk_grad_scale: Some(1.0),
            ..NetworkConfig::default()
        };
        c.schedule = TrainSchedule {
            batch_size: 8,
            warmup_steps: 0,
        };
        c.learner.sync.period = 3;
        c
    };
    let space = DiscretizedActionSpace::build_grid(&ContinuousActionSpec::symmetric(1, 1.0).unwrap(), 5).unwrap();
    let mut bdq = Agent::new(&make(AgentKind::Bdq), 4, space.clone(), 100, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let mut idq = Agent::new(&make(AgentKind::Idq), 4, space, 100, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_eq!(params_of(&bdq), params_of(&idq));

    let priority = PriorityConfig {
        capacity: 128,
        ..PriorityConfig::default()
    };
    let mut data_rng = ChaCha8Rng::seed_from_u64(6);
    let mut replays = [
        Replay::new(ReplayKind::Prioritized, priority).unwrap(),
        Replay::new(ReplayKind::Prioritized, priority).unwrap(),
    ];
    for _ in 0..50 {
        let t = random_transition(&mut data_rng, 1, 5);
        replays[0].add(t.clone());
        replays[1].add(t);
    }
    let schedule = make(AgentKind::Bdq).schedule;
    let (mut ra, mut rb) = (ChaCha8Rng::seed_from_u64(3), ChaCha8Rng::seed_from_u64(3));
    let [rep_a, rep_b] = &mut replays;
    for step in 1..=20 {
        let a = train_step(&mut bdq, rep_a, &schedule, &priority, step, &mut ra).unwrap();
        let b = train_step(&mut idq, rep_b, &schedule, &priority, step, &mut rb).unwrap();
        assert_eq!(a, b);
    }
    assert_eq!(params_of(&bdq), params_of(&idq));
    let state = [0.1, 0.2, -0.3, 0.4];
    assert_eq!(bdq.act_eval(&state).unwrap(), idq.act_eval(&state).unwrap());
}

/// With a single branch the three loss variants coincide.
#[test]
fn loss_modes_agree_for_one_branch() {
    let weights = [1.0, 0.5];
    let targets = vec![vec![0.3], vec![-1.2]];
    let q = vec![vec![0.1], vec![0.4]];
    let losses: Vec<f64> = [LossMode::MeanSquared, LossMode::MeanAbsThenSquare, LossMode::NaiveMean]
        .into_iter()
        .map(|m| loss(&targets, &q, &weights, m).unwrap().loss)
        .collect();
    assert!(losses.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-15));
}

fn emitted(config: &ExperimentConfig) -> (tempfile::TempDir, Vec<PathBuf>) {
    let dir = tempfile::tempdir().unwrap();
    let paths = emit(&run(config).unwrap(), config, dir.path()).unwrap();
    (dir, paths)
}

#[test]
fn csv_layout() {
    let config = tiny_experiment();
    let (dir, paths) = emitted(&config);
    let names: Vec<String> = paths
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["seed_3.csv", "seed_4.csv", "aggregate.csv", "manifest.toml"]);

    let seed = std::fs::read_to_string(dir.path().join("seed_3.csv")).unwrap();
    let header = seed.lines().next().unwrap();
    assert_eq!(header, SEED_HEADER.join(","));
    assert_eq!(header, "episode,train_return,eval_return,loss");
    assert_eq!(seed.lines().count(), 1 + config.total_episodes as usize);

    let agg = std::fs::read_to_string(dir.path().join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().next().unwrap(), AGGREGATE_HEADER.join(","));
    assert_eq!(agg.lines().count() - 1, (config.total_episodes / config.eval_every) as usize);

    let curve = read_seed_csv(&dir.path().join("seed_4.csv"), 4).unwrap();
    assert_eq!(curve.episodes, vec![2, 4, 6]);
}

#[test]
fn manifest_round_trips_to_the_resolved_config() {
    let config = tiny_experiment();
    let (dir, _) = emitted(&config);
    let manifest = Manifest::load(&dir.path().join("manifest.toml")).unwrap();
    let mut expected = config.resolved().unwrap();
    expected.output_dir = dir.path().to_path_buf();
    assert_eq!(manifest.config, expected);
    assert_eq!(manifest.config.resolved().unwrap(), manifest.config);
    assert_eq!(manifest.config_hash, config.config_hash().unwrap());
    assert_eq!(manifest.config.config_hash().unwrap(), manifest.config_hash);
    let text = config.to_toml_string();
    assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), config);
}

#[test]
fn hash_tracks_semantic_fields_only() {
    let base = tiny_experiment();
    let h = base.config_hash().unwrap();

    let mut same = base.clone();
    same.output_dir = PathBuf::from("/somewhere/else");
    assert_eq!(same.config_hash().unwrap(), h);
    let same = base.resolved().unwrap();
    assert_eq!(same.config_hash().unwrap(), h);
    let same = ExperimentConfig::from_toml_str(&base.to_toml_string()).unwrap();
    assert_eq!(same.config_hash().unwrap(), h);

    let mutations: Vec<Box<dyn Fn(&mut ExperimentConfig)>> = vec![
        Box::new(|c| c.total_episodes += 1),
        Box::new(|c| c.seeds = vec![3]),
        Box::new(|c| c.eval_every = 3),
        Box::new(|c| c.eval_episodes += 1),
        Box::new(|c| c.smoothing_window += 1),
        Box::new(|c| c.eval_seed = 5),
        Box::new(|c| c.env.horizon = Some(21)),
        Box::new(|c| c.env.action_penalty = Some(0.02)),
        Box::new(|c| c.agent.kind = AgentKind::Idq),
        Box::new(|c| c.agent.bins = 5),
        Box::new(|c| c.agent.network.branch_hidden = 5),
        Box::new(|c| c.agent.learner.td.gamma = 0.9),
        Box::new(|c| c.agent.learner.td.target_mode = TargetMode::PerDim),
        Box::new(|c| c.agent.learner.adam.learning_rate = 1e-3),
        Box::new(|c| c.agent.learner.clip_norm = None),
        Box::new(|c| c.agent.learner.importance_weights = false),
        Box::new(|c| c.agent.schedule.batch_size = 4),
        Box::new(|c| c.agent.replay.priority.alpha = 0.5),
        Box::new(|c| c.agent.exploration = Some(Exploration::Gaussian { sigma: 0.3 })),
    ];
    for (i, mutate) in mutations.iter().enumerate() {
        let mut c = base.clone();
        mutate(&mut c);
        assert_ne!(c.config_hash().unwrap(), h, "mutation {i} left the hash unchanged");
    }
}

#[test]
fn outputs_are_byte_identical_and_seed_local() {
    let config = tiny_experiment();
    let read = |paths: &[PathBuf]| -> Vec<Vec<u8>> { paths.iter().map(|p| std::fs::read(p).unwrap()).collect() };
    let (_a, pa) = emitted(&config);
    let (_b, pb) = emitted(&config);
    assert_eq!(read(&pa), read(&pb));

    let alone = ExperimentConfig {
        seeds: vec![4],
        ..config.clone()
    };
    let (_c, pc) = emitted(&alone);
    assert_eq!(std::fs::read(&pa[1]).unwrap(), std::fs::read(&pc[0]).unwrap());

    let other = ExperimentConfig {
        seeds: vec![5, 4],
        ..config
    };
    let (_d, pd) = emitted(&other);
    assert_ne!(std::fs::read(&pa[0]).unwrap(), std::fs::read(&pd[0]).unwrap());
}

#[test]
fn target_sync_follows_environment_steps() {
    let rec = train_seed(&tiny_experiment(), 3).unwrap().record;
    let expected: Vec<u64> = (30..=rec.total_steps).filter(|s| s % 25 == 0).collect();
    assert_eq!(rec.sync_steps, expected);
}
