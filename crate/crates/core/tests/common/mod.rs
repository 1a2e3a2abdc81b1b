#![allow(dead_code)]

use std::io::Write;

use bdq_core::agents::{AgentConfig, AgentKind, NetworkConfig};
use bdq_core::branching::BranchingQNetwork;
use bdq_core::envs::EnvConfig;
use bdq_core::harness::ExperimentConfig;
use bdq_core::learning::{evaluate_loss, loss_and_gradients, LossMode};
use bdq_core::nn::Tensor;

/// Agent with the reduced widths used for desk-scale learning runs.
pub fn small_agent(kind: AgentKind, bins: usize) -> AgentConfig {
    let mut agent = AgentConfig::new(kind, bins);
    agent.network = NetworkConfig {
        shared_sizes: vec![128, 64],
        branch_hidden: 32,
        ..NetworkConfig::default()
    };
    agent
}

pub fn experiment(env: &str, agent: AgentConfig, episodes: u32, seeds: &[u64]) -> ExperimentConfig {
    ExperimentConfig {
        total_episodes: episodes,
        seeds: seeds.to_vec(),
        ..ExperimentConfig::new(EnvConfig::new(env), agent)
    }
}

/// A few-second configuration for output and determinism checks.
pub fn tiny_experiment() -> ExperimentConfig {
    let mut agent = AgentConfig::new(AgentKind::Bdq, 3);
    agent.network = NetworkConfig {
        shared_sizes: vec![8],
        branch_hidden: 4,
        ..NetworkConfig::default()
    };
    agent.schedule.warmup_steps = 30;
    agent.schedule.batch_size = 8;
    agent.learner.sync.period = 25;
    let env = EnvConfig {
        horizon: Some(20),
        ..EnvConfig::new("pointmass-2")
    };
    ExperimentConfig {
        total_episodes: 6,
        seeds: vec![3, 4],
        eval_every: 2,
        eval_episodes: 3,
        smoothing_window: 2,
        ..ExperimentConfig::new(env, agent)
    }
}

/// Writes a verdict line that is visible even when test output is captured.
pub fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "criterion {criterion:>2}: {verdict}  {detail}");
}

/// Compares every analytic parameter gradient with a central difference.
/// Trunk gradients are divided by `trunk_divisor` (the network's rescale
/// factor when `None`) first. Returns the largest of
/// `|g - fd| / max(|g|, |fd|, floor)`.
#[allow(clippy::too_many_arguments)]
pub fn finite_difference_error(
    net: &mut BranchingQNetwork,
    states: &Tensor,
    actions: &[Vec<usize>],
    targets: &[Vec<f64>],
    weights: &[f64],
    mode: LossMode,
    floor: f64,
    trunk_divisor: Option<f64>,
) -> f64 {
    let h = 1e-6;
    loss_and_gradients(net, states, actions, targets, weights, mode).unwrap();
    let scale = trunk_divisor.unwrap_or(net.grad_scale());
    let trunk_params = net.trunk().params().len();
    let analytic: Vec<Vec<f64>> = net
        .params()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let g = p.grad().expect("gradient recorded");
            let s = if i < trunk_params { scale } else { 1.0 };
            g.iter().map(|v| v / s).collect()
        })
        .collect();
    let mut worst: f64 = 0.0;
    for (pi, grads) in analytic.iter().enumerate() {
        for (k, &g) in grads.iter().enumerate() {
            let original = net.params()[pi].values()[k];
            net.params_mut()[pi].values_mut()[k] = original + h;
            let plus = evaluate_loss(net, states, actions, targets, weights, mode).unwrap();
            net.params_mut()[pi].values_mut()[k] = original - h;
            let minus = evaluate_loss(net, states, actions, targets, weights, mode).unwrap();
            net.params_mut()[pi].values_mut()[k] = original;
            let fd = (plus - minus) / (2.0 * h);
            worst = worst.max((g - fd).abs() / g.abs().max(fd.abs()).max(floor));
        }
    }
    worst
}
