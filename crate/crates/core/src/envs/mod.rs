//! Discretized continuous-control environments: a planar N-joint reacher and
//! an N-dimensional point mass, plus the uniform action grid shared by all
//! agents.
//!
//! Tasks are pure state machines (`step(state, action)`); [`Env`] pairs a
//! task with its current state for rollout loops.

mod pointmass;
mod reacher;
mod space;

pub use pointmass::{PointMassConfig, PointMassState, PointMassTask};
pub use reacher::{ReacherConfig, ReacherState, ReacherTask};
pub use space::{ContinuousActionSpec, DiscretizedActionSpace};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("unknown environment id `{0}` (expected reacher<N> or pointmass-<N>)")]
    UnknownId(String),
    #[error("invalid environment specification: {0}")]
    InvalidSpec(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("step called before reset")]
    NotReset,
}

/// Reward and episode flags of one transition. `terminated` marks a true
/// terminal state; `truncated` marks the horizon cut-off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Registry entry: an id such as `reacher3` or `pointmass-5` plus optional
/// overrides of the task defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub id: String,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub horizon: Option<u32>,
    #[serde(default)]
    pub reach_radius: Option<f64>,
    #[serde(default)]
    pub action_penalty: Option<f64>,
    /// Reacher only.
    #[serde(default)]
    pub segment_lengths: Option<Vec<f64>>,
    /// Point mass only.
    #[serde(default)]
    pub drag: Option<f64>,
    /// Point mass only.
    #[serde(default)]
    pub arena: Option<f64>,
    /// Point mass only.
    #[serde(default)]
    pub target_range: Option<f64>,
}

impl EnvConfig {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            dt: None,
            horizon: None,
            reach_radius: None,
            action_penalty: None,
            segment_lengths: None,
            drag: None,
            arena: None,
            target_range: None,
        }
    }

    pub fn build(&self) -> Result<Env, EnvError> {
        Env::from_config(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvFamily {
    Reacher(usize),
    PointMass(usize),
}

/// Parses `reacher<N>` (N ≥ 3) and `pointmass-<N>` (N ≥ 1).
pub fn parse_env_id(id: &str) -> Result<EnvFamily, EnvError> {
    let unknown = || EnvError::UnknownId(id.to_string());
    if let Some(n) = id.strip_prefix("reacher") {
        let n: usize = n.parse().map_err(|_| unknown())?;
        if n < 3 {
            return Err(unknown());
        }
        Ok(EnvFamily::Reacher(n))
    } else if let Some(n) = id.strip_prefix("pointmass-") {
        let n: usize = n.parse().map_err(|_| unknown())?;
        if n < 1 {
            return Err(unknown());
        }
        Ok(EnvFamily::PointMass(n))
    } else {
        Err(unknown())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Reacher(ReacherTask),
    PointMass(PointMassTask),
}

#[derive(Debug, Clone, PartialEq)]
enum State {
    Reacher(ReacherState),
    PointMass(PointMassState),
}

/// A task together with its current state.
#[derive(Debug, Clone, PartialEq)]
pub struct Env {
    id: String,
    task: Task,
    state: Option<State>,
}

impl Env {
    pub fn from_config(config: &EnvConfig) -> Result<Self, EnvError> {
        let task = match parse_env_id(&config.id)? {
            EnvFamily::Reacher(n) => {
                if config.drag.is_some() || config.arena.is_some() || config.target_range.is_some() {
                    return Err(EnvError::InvalidSpec(
                        "drag, arena and target_range apply to the point mass only".into(),
                    ));
                }
                Task::Reacher(ReacherTask::new(
                    n,
                    &ReacherConfig {
                        segment_lengths: config.segment_lengths.clone(),
                        dt: config.dt,
                        horizon: config.horizon,
                        reach_radius: config.reach_radius,
                        action_penalty: config.action_penalty,
                    },
                )?)
            }
            EnvFamily::PointMass(n) => {
                if config.segment_lengths.is_some() {
                    return Err(EnvError::InvalidSpec(
                        "segment_lengths applies to the reacher only".into(),
                    ));
                }
                Task::PointMass(PointMassTask::new(
                    n,
                    &PointMassConfig {
                        dt: config.dt,
                        horizon: config.horizon,
                        drag: config.drag,
                        arena: config.arena,
                        target_range: config.target_range,
                        reach_radius: config.reach_radius,
                        action_penalty: config.action_penalty,
                    },
                )?)
            }
        };
        Ok(Self {
            id: config.id.clone(),
            task,
            state: None,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn task(&self) -> &Task {
        &self.task
    }

    pub fn action_spec(&self) -> &ContinuousActionSpec {
        match &self.task {
            Task::Reacher(t) => t.action_spec(),
            Task::PointMass(t) => t.action_spec(),
        }
    }

    pub fn action_dims(&self) -> usize {
        self.action_spec().dims()
    }

    pub fn observation_dim(&self) -> usize {
        match &self.task {
            Task::Reacher(t) => t.observation_dim(),
            Task::PointMass(t) => t.observation_dim(),
        }
    }

    pub fn horizon(&self) -> u32 {
        match &self.task {
            Task::Reacher(t) => t.horizon(),
            Task::PointMass(t) => t.horizon(),
        }
    }

    /// Starts a new episode and returns the first observation.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        let state = match &self.task {
            Task::Reacher(t) => State::Reacher(t.reset(rng)),
            Task::PointMass(t) => State::PointMass(t.reset(rng)),
        };
        self.state = Some(state);
        self.observe().expect("state was just set")
    }

    pub fn observe(&self) -> Result<Vec<f64>, EnvError> {
        match (&self.task, &self.state) {
            (Task::Reacher(t), Some(State::Reacher(s))) => Ok(t.observe(s)),
            (Task::PointMass(t), Some(State::PointMass(s))) => Ok(t.observe(s)),
            _ => Err(EnvError::NotReset),
        }
    }

    /// Advances the current episode; returns the next observation and outcome.
    pub fn step(&mut self, action: &[f64]) -> Result<(Vec<f64>, StepOutcome), EnvError> {
        let (next, outcome) = match (&self.task, &self.state) {
            (Task::Reacher(t), Some(State::Reacher(s))) => {
                let (n, o) = t.step(s, action)?;
                (State::Reacher(n), o)
            }
            (Task::PointMass(t), Some(State::PointMass(s))) => {
                let (n, o) = t.step(s, action)?;
                (State::PointMass(n), o)
            }
            _ => return Err(EnvError::NotReset),
        };
        self.state = Some(next);
        Ok((self.observe()?, outcome))
    }

    pub fn steps_elapsed(&self) -> Option<u32> {
        match &self.state {
            Some(State::Reacher(s)) => Some(s.steps_elapsed),
            Some(State::PointMass(s)) => Some(s.steps_elapsed),
            None => None,
        }
    }

    /// Distance from the controlled point to the target in the current state.
    pub fn distance(&self) -> Result<f64, EnvError> {
        match (&self.task, &self.state) {
            (Task::Reacher(t), Some(State::Reacher(s))) => Ok(t.distance(s)),
            (Task::PointMass(t), Some(State::PointMass(s))) => Ok(t.distance(s)),
            _ => Err(EnvError::NotReset),
        }
    }

    /// Scripted controller action for the current state.
    pub fn oracle_action(&self) -> Result<Vec<f64>, EnvError> {
        match (&self.task, &self.state) {
            (Task::Reacher(t), Some(State::Reacher(s))) => Ok(t.oracle_action(s)),
            (Task::PointMass(t), Some(State::PointMass(s))) => Ok(t.oracle_action(s)),
            _ => Err(EnvError::NotReset),
        }
    }
}
