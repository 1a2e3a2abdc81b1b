use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ContinuousActionSpec, EnvError, StepOutcome};

/// Tunables of the N-dimensional point mass. Unset fields take the defaults
/// of [`PointMassTask::new`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointMassConfig {
    pub dt: Option<f64>,
    pub horizon: Option<u32>,
    pub drag: Option<f64>,
    /// Half-width of the arena box centred on the origin.
    pub arena: Option<f64>,
    /// Targets are drawn uniformly from `[-target_range, target_range]^N`.
    pub target_range: Option<f64>,
    pub reach_radius: Option<f64>,
    pub action_penalty: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointMassState {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub target: Vec<f64>,
    pub steps_elapsed: u32,
}

/// A unit mass in an axis-aligned box, actuated by per-axis accelerations.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMassTask {
    dims: usize,
    dt: f64,
    horizon: u32,
    drag: f64,
    arena: f64,
    target_range: f64,
    reach_radius: f64,
    action_penalty: f64,
    spec: ContinuousActionSpec,
}

impl PointMassTask {
    /// Defaults: `dt = 0.05`, 100-step horizon, drag 1, arena `[-1, 1]^N`,
    /// targets within `±0.8`, reach radius 0.2 and action penalty 0.01.
    pub fn new(dims: usize, config: &PointMassConfig) -> Result<Self, EnvError> {
        if dims == 0 {
            return Err(EnvError::InvalidSpec("point mass needs at least one dimension".into()));
        }
        let task = Self {
            dims,
            dt: config.dt.unwrap_or(0.05),
            horizon: config.horizon.unwrap_or(100),
            drag: config.drag.unwrap_or(1.0),
            arena: config.arena.unwrap_or(1.0),
            target_range: config.target_range.unwrap_or(0.8),
            reach_radius: config.reach_radius.unwrap_or(0.2),
            action_penalty: config.action_penalty.unwrap_or(0.01),
            spec: ContinuousActionSpec::symmetric(dims, 1.0)?,
        };
        let positive = [task.dt, task.arena, task.reach_radius];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || task.horizon == 0 {
            return Err(EnvError::InvalidSpec(
                "dt, horizon, arena and reach radius must be positive".into(),
            ));
        }
        if !(task.drag >= 0.0) || !(task.action_penalty >= 0.0) {
            return Err(EnvError::InvalidSpec("drag and action penalty must be non-negative".into()));
        }
        if !(task.target_range >= 0.0 && task.target_range <= task.arena) {
            return Err(EnvError::InvalidSpec("target range must lie inside the arena".into()));
        }
        Ok(task)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn reach_radius(&self) -> f64 {
        self.reach_radius
    }

    pub fn action_spec(&self) -> &ContinuousActionSpec {
        &self.spec
    }

    pub fn distance(&self, state: &PointMassState) -> f64 {
        sq_dist(&state.position, &state.target).sqrt()
    }

    /// Rest at the origin with a uniformly drawn target.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> PointMassState {
        let r = self.target_range;
        PointMassState {
            position: vec![0.0; self.dims],
            velocity: vec![0.0; self.dims],
            target: (0..self.dims).map(|_| rng.random_range(-r..=r)).collect(),
            steps_elapsed: 0,
        }
    }

    /// Semi-implicit Euler: velocity first (with linear drag), then position.
    /// Hitting a wall clips the position and stops motion along that axis.
    pub fn step(
        &self,
        state: &PointMassState,
        action: &[f64],
    ) -> Result<(PointMassState, StepOutcome), EnvError> {
        self.spec.check(action)?;
        let mut position = state.position.clone();
        let mut velocity = state.velocity.clone();
        for ((p, v), &a) in position.iter_mut().zip(velocity.iter_mut()).zip(action) {
            *v += self.dt * (a - self.drag * *v);
            let moved = *p + self.dt * *v;
            *p = moved.clamp(-self.arena, self.arena);
            if *p != moved {
                *v = 0.0;
            }
        }
        let next = PointMassState {
            position,
            velocity,
            target: state.target.clone(),
            steps_elapsed: state.steps_elapsed + 1,
        };
        let d2 = sq_dist(&next.position, &next.target);
        let effort: f64 = action.iter().map(|a| a * a).sum();
        let terminated = d2.sqrt() < self.reach_radius;
        let outcome = StepOutcome {
            reward: -d2 - self.action_penalty * effort,
            terminated,
            truncated: !terminated && next.steps_elapsed >= self.horizon,
        };
        Ok((next, outcome))
    }

    /// Position, velocity, then target minus position.
    pub fn observe(&self, state: &PointMassState) -> Vec<f64> {
        let mut obs = Vec::with_capacity(3 * self.dims);
        obs.extend_from_slice(&state.position);
        obs.extend_from_slice(&state.velocity);
        obs.extend(state.target.iter().zip(&state.position).map(|(t, p)| t - p));
        obs
    }

    pub fn observation_dim(&self) -> usize {
        3 * self.dims
    }

    /// Saturated proportional-derivative controller towards the target.
    pub fn oracle_action(&self, state: &PointMassState) -> Vec<f64> {
        const KP: f64 = 6.0;
        const KD: f64 = 3.0;
        state
            .position
            .iter()
            .zip(&state.velocity)
            .zip(&state.target)
            .map(|((p, v), t)| (KP * (t - p) - KD * v).clamp(-1.0, 1.0))
            .collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
