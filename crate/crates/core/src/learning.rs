//! Double Q-learning updates for branching networks.
//!
//! Next actions are selected per dimension by the online network and
//! evaluated by the target network. Targets are built per dimension or as a
//! single global value (max or mean over branches), the loss averages the
//! squared branch errors, and the replay priority of a transition is the sum
//! of its absolute branch errors.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::branching::{greedy_action, BranchError, BranchingQNetwork, SyncSchedule};
use crate::nn::{clip_gradients, Adam, AdamConfig, NnError, ParamDump, Tensor};
use crate::replay::{PriorityConfig, Replay, ReplayError, SampledBatch};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error(transparent)]
    Network(#[from] BranchError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("batch shape mismatch: {0}")]
    Shape(String),
    #[error("invalid learning configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// One target per dimension from that branch's own bootstrap value.
    PerDim,
    /// Shared target from the largest branch bootstrap value.
    GlobalMax,
    /// Shared target from the mean branch bootstrap value.
    #[default]
    GlobalMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// `mean_d (y_d - Q_d)^2`
    #[default]
    MeanSquared,
    /// `(mean_d |y_d - Q_d|)^2`
    MeanAbsThenSquare,
    /// `(mean_d (y_d - Q_d))^2`
    NaiveMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TdConfig {
    pub gamma: f64,
    #[serde(default)]
    pub target_mode: TargetMode,
    #[serde(default)]
    pub loss_mode: LossMode,
}

impl Default for TdConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            target_mode: TargetMode::GlobalMean,
            loss_mode: LossMode::MeanSquared,
        }
    }
}

impl TdConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(LearnError::InvalidConfig(format!(
                "gamma {} not in [0, 1]",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Targets for every branch; global modes repeat one value.
    pub fn targets(&self, reward: f64, done: bool, bootstrap: &[f64]) -> Vec<f64> {
        let n = bootstrap.len();
        match self.target_mode {
            TargetMode::PerDim => td_target_per_dim(reward, done, self.gamma, bootstrap),
            TargetMode::GlobalMax => {
                vec![td_target_global_max(reward, done, self.gamma, bootstrap); n]
            }
            TargetMode::GlobalMean => {
                vec![td_target_global_mean(reward, done, self.gamma, bootstrap); n]
            }
        }
    }
}

/// Per-dimension argmax of the online network at each next state.
pub fn select_next_actions(
    online: &BranchingQNetwork,
    next_states: &Tensor,
) -> Result<Vec<Vec<usize>>, LearnError> {
    let out = online.infer(next_states)?;
    Ok((0..out.batch_size())
        .map(|b| greedy_action(&out.row(b)))
        .collect())
}

pub fn td_target_per_dim(reward: f64, done: bool, gamma: f64, bootstrap: &[f64]) -> Vec<f64> {
    bootstrap
        .iter()
        .map(|q| if done { reward } else { reward + gamma * q })
        .collect()
}

pub fn td_target_global_max(reward: f64, done: bool, gamma: f64, bootstrap: &[f64]) -> f64 {
    if done {
        return reward;
    }
    let max = bootstrap.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    reward + gamma * max
}

pub fn td_target_global_mean(reward: f64, done: bool, gamma: f64, bootstrap: &[f64]) -> f64 {
    if done {
        return reward;
    }
    let mean = bootstrap.iter().sum::<f64>() / bootstrap.len() as f64;
    reward + gamma * mean
}

/// Sum of absolute branch errors of one transition.
pub fn prioritization_error(errors: &[f64]) -> f64 {
    errors.iter().map(|e| e.abs()).sum()
}

/// Batch loss with per-transition branch errors `y_d - Q_d` and the gradient
/// of the loss with respect to each taken `Q_d(s, a_d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub errors: Vec<Vec<f64>>,
    pub grad: Vec<Vec<f64>>,
}

/// Importance-weighted batch mean of the per-transition branch loss.
pub fn loss(
    targets: &[Vec<f64>],
    q_taken: &[Vec<f64>],
    weights: &[f64],
    mode: LossMode,
) -> Result<LossOutput, LearnError> {
    let batch = targets.len();
    if batch == 0 || q_taken.len() != batch || weights.len() != batch {
        return Err(LearnError::Shape(format!(
            "{} targets, {} Q rows, {} weights",
            batch,
            q_taken.len(),
            weights.len()
        )));
    }
    let mut total = 0.0;
    let mut errors = Vec::with_capacity(batch);
    let mut grad = Vec::with_capacity(batch);
    for ((y, q), &w) in targets.iter().zip(q_taken).zip(weights) {
        if y.len() != q.len() || y.is_empty() {
            return Err(LearnError::Shape(format!(
                "{} targets vs {} branch values",
                y.len(),
                q.len()
            )));
        }
        let n = y.len() as f64;
        let delta: Vec<f64> = y.iter().zip(q).map(|(y, q)| y - q).collect();
        let scale = w / batch as f64;
        let (per_item, g): (f64, Vec<f64>) = match mode {
            LossMode::MeanSquared => (
                delta.iter().map(|d| d * d).sum::<f64>() / n,
                delta.iter().map(|d| -2.0 * d / n * scale).collect(),
            ),
            LossMode::MeanAbsThenSquare => {
                let m = delta.iter().map(|d| d.abs()).sum::<f64>() / n;
                (
                    m * m,
                    delta
                        .iter()
                        .map(|d| -2.0 * m * d.signum() * (*d != 0.0) as u8 as f64 / n * scale)
                        .collect(),
                )
            }
            LossMode::NaiveMean => {
                let m = delta.iter().sum::<f64>() / n;
                (m * m, delta.iter().map(|_| -2.0 * m / n * scale).collect())
            }
        };
        total += w * per_item;
        errors.push(delta);
        grad.push(g);
    }
    Ok(LossOutput {
        loss: total / batch as f64,
        errors,
        grad,
    })
}

/// Tensors for one update. `actions[i][d]` indexes branch `d` of the network
/// being trained.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnBatch {
    pub states: Tensor,
    pub next_states: Tensor,
    pub actions: Vec<Vec<usize>>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    pub weights: Vec<f64>,
}

impl LearnBatch {
    /// Builds a batch from sampled transitions, projecting each joint action
    /// through `project`.
    pub fn from_sample<F>(sample: &SampledBatch<'_>, mut project: F) -> Result<Self, LearnError>
    where
        F: FnMut(&[usize]) -> Vec<usize>,
    {
        let states: Vec<&[f64]> = sample.transitions.iter().map(|t| t.state.as_slice()).collect();
        let next: Vec<&[f64]> = sample
            .transitions
            .iter()
            .map(|t| t.next_state.as_slice())
            .collect();
        Ok(Self {
            states: Tensor::from_rows(&states)?,
            next_states: Tensor::from_rows(&next)?,
            actions: sample.transitions.iter().map(|t| project(&t.action)).collect(),
            rewards: sample.transitions.iter().map(|t| t.reward).collect(),
            dones: sample.transitions.iter().map(|t| t.done).collect(),
            weights: sample.weights.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Double-Q targets for every transition of `batch`.
pub fn compute_targets(
    online: &BranchingQNetwork,
    target: &BranchingQNetwork,
    batch: &LearnBatch,
    td: &TdConfig,
) -> Result<Vec<Vec<f64>>, LearnError> {
    let selected = select_next_actions(online, &batch.next_states)?;
    let evaluated = target.infer(&batch.next_states)?;
    Ok(selected
        .iter()
        .enumerate()
        .map(|(b, sel)| {
            let bootstrap: Vec<f64> = sel
                .iter()
                .enumerate()
                .map(|(d, &a)| evaluated.q[d].row(b)[a])
                .collect();
            td.targets(batch.rewards[b], batch.dones[b], &bootstrap)
        })
        .collect())
}

/// Gathers `Q_d(s, a_d)` for each transition from batched outputs.
fn gather_taken(q: &[Tensor], actions: &[Vec<usize>]) -> Result<Vec<Vec<f64>>, LearnError> {
    actions
        .iter()
        .enumerate()
        .map(|(b, act)| {
            if act.len() != q.len() {
                return Err(LearnError::Shape(format!(
                    "action has {} components for {} branches",
                    act.len(),
                    q.len()
                )));
            }
            act.iter()
                .zip(q)
                .map(|(&a, qd)| {
                    qd.row(b).get(a).copied().ok_or_else(|| {
                        LearnError::Shape(format!("sub-action {a} out of range {}", qd.cols()))
                    })
                })
                .collect()
        })
        .collect()
}

/// Loss value only, without touching gradients.
pub fn evaluate_loss(
    online: &BranchingQNetwork,
    states: &Tensor,
    actions: &[Vec<usize>],
    targets: &[Vec<f64>],
    weights: &[f64],
    mode: LossMode,
) -> Result<f64, LearnError> {
    let out = online.infer(states)?;
    let taken = gather_taken(&out.q, actions)?;
    Ok(loss(targets, &taken, weights, mode)?.loss)
}

/// Zeroes gradients, runs forward and backward, and leaves `dL/dθ` (with the
/// trunk rescale applied) in every parameter's gradient buffer.
pub fn loss_and_gradients(
    online: &mut BranchingQNetwork,
    states: &Tensor,
    actions: &[Vec<usize>],
    targets: &[Vec<f64>],
    weights: &[f64],
    mode: LossMode,
) -> Result<LossOutput, LearnError> {
    online.zero_grad();
    let out = online.forward(states)?;
    let taken = gather_taken(&out.q, actions)?;
    let result = loss(targets, &taken, weights, mode)?;
    let mut grad_q: Vec<Tensor> = out.q.iter().map(|q| Tensor::zeros(q.shape().to_vec())).collect();
    for (b, (act, g)) in actions.iter().zip(&result.grad).enumerate() {
        for (d, (&a, &gd)) in act.iter().zip(g).enumerate() {
            grad_q[d].row_mut(b)[a] += gd;
        }
    }
    online.backward(&grad_q)?;
    Ok(result)
}

fn default_clip_norm() -> Option<f64> {
    Some(10.0)
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    #[serde(default)]
    pub td: TdConfig,
    #[serde(default)]
    pub adam: AdamConfig,
    /// Global-norm gradient clip; `None` disables clipping.
    #[serde(default = "default_clip_norm")]
    pub clip_norm: Option<f64>,
    #[serde(default)]
    pub sync: SyncSchedule,
    /// Multiply each transition's loss by its replay importance weight.
    #[serde(default = "default_true")]
    pub importance_weights: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            td: TdConfig::default(),
            adam: AdamConfig::default(),
            clip_norm: default_clip_norm(),
            sync: SyncSchedule::default(),
            importance_weights: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub loss: f64,
    /// `y_d - Q_d(s, a_d)` per transition and branch, before the update.
    pub errors: Vec<Vec<f64>>,
    pub grad_norm: f64,
}

/// Online network, its target copy and the optimizer.
#[derive(Debug, Clone)]
pub struct QLearner {
    online: BranchingQNetwork,
    target: BranchingQNetwork,
    optimizer: Adam,
    config: LearnerConfig,
    updates: u64,
    syncs: u64,
}

impl QLearner {
    pub fn new(online: BranchingQNetwork, config: LearnerConfig) -> Result<Self, LearnError> {
        config.td.validate()?;
        let optimizer = Adam::new(config.adam)?;
        Ok(Self {
            target: online.clone(),
            online,
            optimizer,
            config,
            updates: 0,
            syncs: 0,
        })
    }

    pub fn online(&self) -> &BranchingQNetwork {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut BranchingQNetwork {
        &mut self.online
    }

    pub fn target(&self) -> &BranchingQNetwork {
        &self.target
    }

    pub fn target_mut(&mut self) -> &mut BranchingQNetwork {
        &mut self.target
    }

    pub fn optimizer(&self) -> &Adam {
        &self.optimizer
    }

    pub fn optimizer_mut(&mut self) -> &mut Adam {
        &mut self.optimizer
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn syncs(&self) -> u64 {
        self.syncs
    }

    pub fn set_counters(&mut self, updates: u64, syncs: u64) {
        self.updates = updates;
        self.syncs = syncs;
    }

    /// One gradient step on `batch`.
    pub fn update(&mut self, batch: &LearnBatch) -> Result<UpdateOutcome, LearnError> {
        if batch.is_empty() {
            return Err(LearnError::Shape("empty batch".into()));
        }
        let targets = compute_targets(&self.online, &self.target, batch, &self.config.td)?;
        let weights = if self.config.importance_weights {
            batch.weights.clone()
        } else {
            vec![1.0; batch.len()]
        };
        let out = loss_and_gradients(
            &mut self.online,
            &batch.states,
            &batch.actions,
            &targets,
            &weights,
            self.config.td.loss_mode,
        )?;
        let mut params = self.online.params_mut();
        let grad_norm = match self.config.clip_norm {
            Some(max) => clip_gradients(&mut params, max),
            None => crate::nn::global_grad_norm(&params),
        };
        self.optimizer.step(&mut params)?;
        self.updates += 1;
        Ok(UpdateOutcome {
            loss: out.loss,
            errors: out.errors,
            grad_norm,
        })
    }

    /// Appends online and target parameters, optimizer moments and counters
    /// under `prefix`.
    pub fn dump_into(&self, prefix: &str, dump: &mut ParamDump) {
        self.online.dump_into(&format!("{prefix}online."), dump);
        self.target.dump_into(&format!("{prefix}target."), dump);
        let (m, v) = self.optimizer.moments();
        for (i, (m, v)) in m.iter().zip(v).enumerate() {
            dump.push(format!("{prefix}adam.m.{i}"), &Tensor::row_vector(m));
            dump.push(format!("{prefix}adam.v.{i}"), &Tensor::row_vector(v));
        }
        dump.meta.insert(format!("{prefix}adam_steps"), self.optimizer.step_count().to_string());
        dump.meta.insert(format!("{prefix}adam_slots"), m.len().to_string());
        dump.meta.insert(format!("{prefix}updates"), self.updates.to_string());
        dump.meta.insert(format!("{prefix}syncs"), self.syncs.to_string());
    }

    pub fn load_from(&mut self, prefix: &str, dump: &mut ParamDump) -> Result<(), LearnError> {
        let counter = |dump: &ParamDump, key: &str| -> Result<u64, LearnError> {
            let raw = dump.meta(&format!("{prefix}{key}"))?;
            raw.parse()
                .map_err(|_| NnError::Checkpoint(format!("bad counter `{key}` = `{raw}`")).into())
        };
        self.online.load_from(&format!("{prefix}online."), dump)?;
        self.target.load_from(&format!("{prefix}target."), dump)?;
        let slots = counter(dump, "adam_slots")? as usize;
        let mut m = Vec::with_capacity(slots);
        let mut v = Vec::with_capacity(slots);
        for i in 0..slots {
            m.push(dump.take(&format!("{prefix}adam.m.{i}"))?.into_values());
            v.push(dump.take(&format!("{prefix}adam.v.{i}"))?.into_values());
        }
        self.optimizer.restore(counter(dump, "adam_steps")?, m, v)?;
        self.updates = counter(dump, "updates")?;
        self.syncs = counter(dump, "syncs")?;
        Ok(())
    }

    /// Copies online into target when the schedule fires at `step`.
    pub fn sync_if_due(&mut self, step: u64) -> Result<bool, LearnError> {
        if self.config.sync.fires(step) {
            self.target.copy_params_from(&self.online)?;
            self.syncs += 1;
            Ok(true)
        } else {
            Ok(false)
        }
    }
}

/// Outcome of learning from one sampled batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub loss: f64,
    /// Prioritization error per sampled transition.
    pub priorities: Vec<f64>,
}

/// Anything that can learn from replay samples (one network or an ensemble).
pub trait Learner {
    fn learn(&mut self, sample: &SampledBatch<'_>) -> Result<BatchOutcome, LearnError>;

    /// Target-network bookkeeping after environment step `step`.
    fn sync_if_due(&mut self, step: u64) -> Result<bool, LearnError>;
}

/// Scalars emitted by one training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub loss: f64,
    pub beta: f64,
    pub mean_priority: Option<f64>,
    pub synced: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSchedule {
    pub batch_size: usize,
    /// Environment steps before the first update.
    pub warmup_steps: u64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            batch_size: 64,
            warmup_steps: 1000,
        }
    }
}

impl TrainSchedule {
    pub fn ready(&self, step: u64, replay_len: usize) -> bool {
        step >= self.warmup_steps && replay_len >= self.batch_size
    }
}

/// Samples a batch, updates the learner, writes back priorities and syncs
/// the target network when due. `step` counts environment steps so far.
pub fn train_step<L: Learner + ?Sized, R: Rng + ?Sized>(
    learner: &mut L,
    replay: &mut Replay,
    schedule: &TrainSchedule,
    priority: &PriorityConfig,
    step: u64,
    rng: &mut R,
) -> Result<TrainStats, LearnError> {
    if !schedule.ready(step, replay.len()) {
        return Err(ReplayError::Underfull {
            size: replay.len(),
            batch: schedule.batch_size,
        }
        .into());
    }
    let beta = priority.beta(step);
    let (indices, outcome) = {
        let sample = replay.sample(schedule.batch_size, beta, rng)?;
        let outcome = learner.learn(&sample)?;
        (sample.indices, outcome)
    };
    replay.update_priorities(&indices, &outcome.priorities)?;
    let synced = learner.sync_if_due(step)?;
    Ok(TrainStats {
        loss: outcome.loss,
        beta,
        mean_priority: replay.mean_priority(),
        synced,
    })
}
