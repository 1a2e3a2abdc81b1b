//! The agents compared in experiments: the branching agent (BDQ), a flat
//! dueling double DQN over all `n^N` joint actions, and an ensemble of
//! independent per-dimension dueling networks (IDQ), with Gaussian and
//! ε-greedy exploration.

use std::f64::consts::SQRT_2;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::branching::{argmax, Aggregation, BranchError, BranchingQNetwork, BranchingSpec, NetworkLayout};
use crate::envs::{DiscretizedActionSpace, EnvError};
use crate::learning::{
    prioritization_error, BatchOutcome, LearnBatch, LearnError, Learner, LearnerConfig, QLearner,
    TrainSchedule,
};
use crate::nn::{NnError, ParamDump};
use crate::replay::{PriorityConfig, ReplayKind, SampledBatch};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(
        "flat agent needs {outputs} joint-action outputs ({bins}^{dims}), above the cap of {cap}"
    )]
    ResourceCap {
        /// Combinatorial output count in scientific notation.
        outputs: String,
        bins: usize,
        dims: usize,
        cap: u64,
    },
    #[error("invalid agent configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Network(#[from] BranchError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Bdq,
    DuelingDdqn,
    Idq,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Bdq => "bdq",
            AgentKind::DuelingDdqn => "dueling_ddqn",
            AgentKind::Idq => "idq",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bdq" => Some(AgentKind::Bdq),
            "dueling_ddqn" | "flat" => Some(AgentKind::DuelingDdqn),
            "idq" => Some(AgentKind::Idq),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Exploration {
    /// Gaussian noise of standard deviation `sigma` (actuator units) around
    /// the greedy action, snapped back to the grid.
    Gaussian { sigma: f64 },
    /// Linear anneal from `start` to `end` over `anneal_steps` environment
    /// steps; `None` means 10% of the run's step budget.
    EpsGreedy {
        start: f64,
        end: f64,
        #[serde(default)]
        anneal_steps: Option<u64>,
    },
}

impl Exploration {
    pub fn gaussian() -> Self {
        Exploration::Gaussian { sigma: 0.2 }
    }

    pub fn eps_greedy() -> Self {
        Exploration::EpsGreedy {
            start: 1.0,
            end: 0.05,
            anneal_steps: None,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        match *self {
            Exploration::Gaussian { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => Err(
                AgentError::InvalidConfig(format!("gaussian sigma must be non-negative, got {sigma}")),
            ),
            Exploration::EpsGreedy { start, end, .. }
                if !((0.0..=1.0).contains(&start) && (0.0..=1.0).contains(&end)) =>
            {
                Err(AgentError::InvalidConfig(format!(
                    "epsilon endpoints must lie in [0, 1], got {start} and {end}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Fills in the anneal length from a step budget.
    pub fn resolved(self, step_budget: u64) -> Self {
        match self {
            Exploration::EpsGreedy {
                start,
                end,
                anneal_steps: None,
            } => Exploration::EpsGreedy {
                start,
                end,
                anneal_steps: Some((step_budget / 10).max(1)),
            },
            other => other,
        }
    }

    /// Exploration probability at `step` (zero for Gaussian exploration).
    pub fn epsilon(&self, step: u64) -> f64 {
        match *self {
            Exploration::Gaussian { .. } => 0.0,
            Exploration::EpsGreedy {
                start,
                end,
                anneal_steps,
            } => {
                let span = anneal_steps.unwrap_or(1).max(1);
                let frac = (step as f64 / span as f64).min(1.0);
                start + frac * (end - start)
            }
        }
    }
}

/// Layer widths shared by all agent kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub shared_sizes: Vec<usize>,
    pub branch_hidden: usize,
    #[serde(default)]
    pub value_hidden: Option<usize>,
    #[serde(default)]
    pub aggregation: Aggregation,
    /// Trunk gradient factor; `None` picks `1/(N+1)` for the branching agent,
    /// `1/√2` for the flat agent and 1 for independent members.
    #[serde(default)]
    pub trunk_grad_scale: Option<f64>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            shared_sizes: vec![512, 256],
            branch_hidden: 128,
            value_hidden: None,
            aggregation: Aggregation::Mean,
            trunk_grad_scale: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayConfig {
    pub kind: ReplayKind,
    #[serde(default)]
    pub priority: PriorityConfig,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            kind: ReplayKind::Prioritized,
            priority: PriorityConfig::default(),
        }
    }
}

fn default_cap() -> u64 {
    1_000_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub kind: AgentKind,
    /// Sub-actions per dimension.
    pub bins: usize,
    /// `None` picks a default from the agent kind and environment.
    #[serde(default)]
    pub exploration: Option<Exploration>,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub schedule: TrainSchedule,
    #[serde(default)]
    pub replay: ReplayConfig,
    /// Largest joint-action output layer the flat agent may build.
    #[serde(default = "default_cap")]
    pub flat_output_cap: u64,
}

impl AgentConfig {
    pub fn new(kind: AgentKind, bins: usize) -> Self {
        Self {
            kind,
            bins,
            exploration: None,
            network: NetworkConfig::default(),
            learner: LearnerConfig::default(),
            schedule: TrainSchedule::default(),
            replay: ReplayConfig::default(),
            flat_output_cap: default_cap(),
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.bins < 2 {
            return Err(AgentError::InvalidConfig(format!(
                "need at least 2 bins, got {}",
                self.bins
            )));
        }
        if let Some(e) = &self.exploration {
            e.validate()?;
        }
        if self.schedule.batch_size == 0 {
            return Err(AgentError::InvalidConfig("batch size must be positive".into()));
        }
        self.learner.td.validate()?;
        self.learner
            .adam
            .validate()
            .map_err(|e| AgentError::InvalidConfig(e.to_string()))?;
        self.replay
            .priority
            .validate()
            .map_err(|e| AgentError::InvalidConfig(e.to_string()))?;
        Ok(())
    }
}

/// Checks the flat agent's `n^N` output layer against `cap`.
pub fn flat_output_count(space: &DiscretizedActionSpace, cap: u64) -> Result<usize, AgentError> {
    let count = space.joint_count();
    match count {
        Some(c) if c <= cap as u128 => Ok(c as usize),
        _ => {
            let approx = (space.bins() as f64).powi(space.dims() as i32);
            Err(AgentError::ResourceCap {
                outputs: format!("{approx:.1e}"),
                bins: space.bins(),
                dims: space.dims(),
                cap,
            })
        }
    }
}

/// Dueling Q-values over all joint actions, in row-major joint order.
pub fn flat_q_values(net: &BranchingQNetwork, state: &[f64]) -> Result<Vec<f64>, AgentError> {
    if net.branch_count() != 1 {
        return Err(AgentError::InvalidConfig(format!(
            "flat Q-values need a single-head network, found {} heads",
            net.branch_count()
        )));
    }
    Ok(net.q_values(state)?.swap_remove(0))
}

#[derive(Debug, Clone)]
enum Core {
    /// The branching agent (`flat == false`) or the flat agent.
    Single { learner: QLearner, flat: bool },
    Ensemble(Vec<QLearner>),
}

#[derive(Debug, Clone)]
pub struct Agent {
    config: AgentConfig,
    space: DiscretizedActionSpace,
    exploration: Exploration,
    core: Core,
}

impl Agent {
    /// Builds an agent for observations of `state_dim` values acting on
    /// `space`. `step_budget` resolves the default ε anneal length.
    pub fn new<R: Rng + ?Sized>(
        config: &AgentConfig,
        state_dim: usize,
        space: DiscretizedActionSpace,
        step_budget: u64,
        rng: &mut R,
    ) -> Result<Self, AgentError> {
        config.validate()?;
        if space.bins() != config.bins {
            return Err(AgentError::InvalidConfig(format!(
                "action space has {} bins but the agent expects {}",
                space.bins(),
                config.bins
            )));
        }
        let exploration = config
            .exploration
            .unwrap_or(match config.kind {
                AgentKind::Bdq | AgentKind::Idq => Exploration::gaussian(),
                AgentKind::DuelingDdqn => Exploration::eps_greedy(),
            })
            .resolved(step_budget);
        let net = &config.network;
        let dims = space.dims();
        let layout = |head_sizes: Vec<usize>, scale: f64| NetworkLayout {
            state_dim,
            head_sizes,
            shared_sizes: net.shared_sizes.clone(),
            branch_hidden: net.branch_hidden,
            value_hidden: net.value_hidden.unwrap_or(net.branch_hidden),
            aggregation: net.aggregation,
            trunk_grad_scale: net.trunk_grad_scale.unwrap_or(scale),
        };
        let core = match config.kind {
            AgentKind::Bdq => {
                let spec = BranchingSpec {
                    state_dim,
                    action_dims: dims,
                    bins_per_dim: config.bins,
                    shared_sizes: net.shared_sizes.clone(),
                    branch_hidden: net.branch_hidden,
                    value_hidden: net.value_hidden,
                    aggregation: net.aggregation,
                    trunk_grad_scale: net.trunk_grad_scale,
                };
                let online = BranchingQNetwork::new(&spec, rng)?;
                Core::Single {
                    learner: QLearner::new(online, config.learner.clone())?,
                    flat: false,
                }
            }
            AgentKind::DuelingDdqn => {
                let outputs = flat_output_count(&space, config.flat_output_cap)?;
                let online = BranchingQNetwork::from_layout(layout(vec![outputs], 1.0 / SQRT_2), rng)?;
                Core::Single {
                    learner: QLearner::new(online, config.learner.clone())?,
                    flat: true,
                }
            }
            AgentKind::Idq => {
                let members = (0..dims)
                    .map(|_| {
                        let online = BranchingQNetwork::from_layout(layout(vec![config.bins], 1.0), rng)?;
                        Ok(QLearner::new(online, config.learner.clone())?)
                    })
                    .collect::<Result<Vec<_>, AgentError>>()?;
                Core::Ensemble(members)
            }
        };
        Ok(Self {
            config: config.clone(),
            space,
            exploration,
            core,
        })
    }

    pub fn kind(&self) -> AgentKind {
        self.config.kind
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn space(&self) -> &DiscretizedActionSpace {
        &self.space
    }

    pub fn exploration(&self) -> &Exploration {
        &self.exploration
    }

    pub fn set_exploration(&mut self, exploration: Exploration) -> Result<(), AgentError> {
        exploration.validate()?;
        self.exploration = exploration;
        Ok(())
    }

    /// Every trained network with its optimizer: one for the branching and
    /// flat agents, one per dimension for the independent ensemble.
    pub fn learners(&self) -> Vec<&QLearner> {
        match &self.core {
            Core::Single { learner, .. } => vec![learner],
            Core::Ensemble(members) => members.iter().collect(),
        }
    }

    pub fn learners_mut(&mut self) -> Vec<&mut QLearner> {
        match &mut self.core {
            Core::Single { learner, .. } => vec![learner],
            Core::Ensemble(members) => members.iter_mut().collect(),
        }
    }

    /// Output units across all heads, including each network's value output.
    pub fn output_count(&self) -> usize {
        self.learners().iter().map(|l| l.online().output_count()).sum()
    }

    pub fn param_count(&self) -> usize {
        self.learners().iter().map(|l| l.online().param_count()).sum()
    }

    pub fn updates(&self) -> u64 {
        self.learners().first().map_or(0, |l| l.updates())
    }

    /// Deterministic per-dimension greedy action.
    pub fn act_eval(&self, state: &[f64]) -> Result<Vec<usize>, AgentError> {
        match &self.core {
            Core::Single { learner, flat: false } => Ok(learner.online().greedy(state)?),
            Core::Single { learner, flat: true } => {
                let q = flat_q_values(learner.online(), state)?;
                Ok(self.space.unflatten(argmax(&q)))
            }
            Core::Ensemble(members) => members
                .iter()
                .map(|m| Ok(m.online().greedy(state)?[0]))
                .collect(),
        }
    }

    /// Exploratory action at environment step `step`.
    pub fn act_train<R: Rng + ?Sized>(
        &self,
        state: &[f64],
        rng: &mut R,
        step: u64,
    ) -> Result<Vec<usize>, AgentError> {
        let greedy = self.act_eval(state)?;
        match self.exploration {
            Exploration::Gaussian { sigma } => {
                if sigma == 0.0 {
                    return Ok(greedy);
                }
                let mut action = self.space.decode(&greedy)?;
                for a in &mut action {
                    let z: f64 = rng.sample(StandardNormal);
                    *a += sigma * z;
                }
                Ok(self.space.encode(&action)?)
            }
            Exploration::EpsGreedy { .. } => {
                if rng.random::<f64>() < self.exploration.epsilon(step) {
                    let bins = self.space.bins();
                    Ok((0..self.space.dims()).map(|_| rng.random_range(0..bins)).collect())
                } else {
                    Ok(greedy)
                }
            }
        }
    }

    /// Parameters, optimizer state and counters of every network.
    pub fn checkpoint(&self) -> ParamDump {
        let mut dump = ParamDump::default();
        dump.meta.insert("kind".into(), self.kind().name().into());
        for (i, l) in self.learners().iter().enumerate() {
            l.dump_into(&format!("net{i}."), &mut dump);
        }
        dump
    }

    pub fn restore(&mut self, mut dump: ParamDump) -> Result<(), AgentError> {
        let kind = dump.meta("kind")?;
        if kind != self.kind().name() {
            return Err(AgentError::InvalidConfig(format!(
                "checkpoint holds a `{kind}` agent, expected `{}`",
                self.kind().name()
            )));
        }
        for (i, l) in self.learners_mut().into_iter().enumerate() {
            l.load_from(&format!("net{i}."), &mut dump)?;
        }
        Ok(())
    }
}

impl Learner for Agent {
    fn learn(&mut self, sample: &SampledBatch<'_>) -> Result<BatchOutcome, LearnError> {
        match &mut self.core {
            Core::Single { learner, flat } => {
                let space = &self.space;
                let batch = if *flat {
                    LearnBatch::from_sample(sample, |a| {
                        vec![space.flat_index(a).expect("stored actions lie on the grid")]
                    })?
                } else {
                    LearnBatch::from_sample(sample, |a| a.to_vec())?
                };
                let out = learner.update(&batch)?;
                Ok(BatchOutcome {
                    loss: out.loss,
                    priorities: out.errors.iter().map(|e| prioritization_error(e)).collect(),
                })
            }
            Core::Ensemble(members) => {
                let mut batch = LearnBatch::from_sample(sample, |a| a.to_vec())?;
                let joint = std::mem::take(&mut batch.actions);
                let mut priorities = vec![0.0; batch.len()];
                let mut loss = 0.0;
                for (d, member) in members.iter_mut().enumerate() {
                    batch.actions = joint.iter().map(|a| vec![a[d]]).collect();
                    let out = member.update(&batch)?;
                    loss += out.loss;
                    for (p, e) in priorities.iter_mut().zip(&out.errors) {
                        *p += prioritization_error(e);
                    }
                }
                Ok(BatchOutcome {
                    loss: loss / members.len() as f64,
                    priorities,
                })
            }
        }
    }

    fn sync_if_due(&mut self, step: u64) -> Result<bool, LearnError> {
        let mut synced = false;
        for l in self.learners_mut() {
            synced |= l.sync_if_due(step)?;
        }
        Ok(synced)
    }
}
