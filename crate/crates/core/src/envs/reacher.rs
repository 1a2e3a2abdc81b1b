use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ContinuousActionSpec, EnvError, StepOutcome};

/// Tunables of the planar N-joint reacher. Unset fields take the defaults of
/// [`ReacherTask::new`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReacherConfig {
    pub segment_lengths: Option<Vec<f64>>,
    pub dt: Option<f64>,
    pub horizon: Option<u32>,
    /// Absolute reach radius; defaults to 5% of the arm length.
    pub reach_radius: Option<f64>,
    pub action_penalty: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReacherState {
    pub joint_angles: Vec<f64>,
    pub target: [f64; 2],
    pub steps_elapsed: u32,
}

/// Kinematic planar arm whose actions are joint velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct ReacherTask {
    segments: Vec<f64>,
    limits: Vec<(f64, f64)>,
    dt: f64,
    horizon: u32,
    reach_radius: f64,
    action_penalty: f64,
    spec: ContinuousActionSpec,
}

impl ReacherTask {
    /// Segments of length `1/N`, `dt = 0.05`, 200-step horizon, reach radius
    /// `0.05·L`, action penalty 0.01 and joint limits `±(π − π/N)`.
    pub fn new(joints: usize, config: &ReacherConfig) -> Result<Self, EnvError> {
        if joints < 2 {
            return Err(EnvError::InvalidSpec(format!("reacher needs at least 2 joints, got {joints}")));
        }
        let segments = config
            .segment_lengths
            .clone()
            .unwrap_or_else(|| vec![1.0 / joints as f64; joints]);
        if segments.len() != joints || segments.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(EnvError::InvalidSpec(format!(
                "need {joints} positive segment lengths, got {segments:?}"
            )));
        }
        let total: f64 = segments.iter().sum();
        let limit = PI - PI / joints as f64;
        let task = Self {
            limits: vec![(-limit, limit); joints],
            dt: config.dt.unwrap_or(0.05),
            horizon: config.horizon.unwrap_or(200),
            reach_radius: config.reach_radius.unwrap_or(0.05 * total),
            action_penalty: config.action_penalty.unwrap_or(0.01),
            spec: ContinuousActionSpec::symmetric(joints, 1.0)?,
            segments,
        };
        if !(task.dt > 0.0 && task.dt.is_finite()) || task.horizon == 0 {
            return Err(EnvError::InvalidSpec("dt and horizon must be positive".into()));
        }
        if !(task.reach_radius > 0.0) || !(task.action_penalty >= 0.0) {
            return Err(EnvError::InvalidSpec(
                "reach radius must be positive and action penalty non-negative".into(),
            ));
        }
        Ok(task)
    }

    pub fn joints(&self) -> usize {
        self.segments.len()
    }

    pub fn segment_lengths(&self) -> &[f64] {
        &self.segments
    }

    pub fn arm_length(&self) -> f64 {
        self.segments.iter().sum()
    }

    pub fn joint_limits(&self) -> &[(f64, f64)] {
        &self.limits
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

    /// Planar forward kinematics; each joint angle is relative to the previous segment.
    pub fn fingertip(&self, angles: &[f64]) -> [f64; 2] {
        let mut heading = 0.0;
        let mut tip = [0.0, 0.0];
        for (&theta, &len) in angles.iter().zip(&self.segments) {
            heading += theta;
            tip[0] += len * heading.cos();
            tip[1] += len * heading.sin();
        }
        tip
    }

    pub fn distance(&self, state: &ReacherState) -> f64 {
        let tip = self.fingertip(&state.joint_angles);
        (tip[0] - state.target[0]).hypot(tip[1] - state.target[1])
    }

    /// Straight arm and a target drawn from the annulus `0.2·L < r < 0.9·L`
    /// at a bearing within the first joint's range.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> ReacherState {
        let l = self.arm_length();
        let radius = rng.random_range(0.2 * l..0.9 * l);
        let bearing_limit = self.limits[0].1;
        let bearing = rng.random_range(-bearing_limit..=bearing_limit);
        ReacherState {
            joint_angles: vec![0.0; self.joints()],
            target: [radius * bearing.cos(), radius * bearing.sin()],
            steps_elapsed: 0,
        }
    }

    pub fn step(&self, state: &ReacherState, action: &[f64]) -> Result<(ReacherState, StepOutcome), EnvError> {
        self.spec.check(action)?;
        let joint_angles = state
            .joint_angles
            .iter()
            .zip(action)
            .zip(&self.limits)
            .map(|((&theta, &w), &(lo, hi))| (theta + self.dt * w).clamp(lo, hi))
            .collect();
        let next = ReacherState {
            joint_angles,
            target: state.target,
            steps_elapsed: state.steps_elapsed + 1,
        };
        let distance = self.distance(&next);
        let effort: f64 = action.iter().map(|a| a * a).sum();
        let terminated = distance < self.reach_radius;
        let outcome = StepOutcome {
            reward: -distance - self.action_penalty * effort,
            terminated,
            truncated: !terminated && next.steps_elapsed >= self.horizon,
        };
        Ok((next, outcome))
    }

    /// `cos θ_i, sin θ_i` per joint, then fingertip, target and target minus
    /// fingertip, all in units of the arm length.
    pub fn observe(&self, state: &ReacherState) -> Vec<f64> {
        let l = self.arm_length();
        let tip = self.fingertip(&state.joint_angles);
        let mut obs = Vec::with_capacity(2 * self.joints() + 6);
        for &theta in &state.joint_angles {
            obs.push(theta.cos());
            obs.push(theta.sin());
        }
        obs.extend([
            tip[0] / l,
            tip[1] / l,
            state.target[0] / l,
            state.target[1] / l,
            (state.target[0] - tip[0]) / l,
            (state.target[1] - tip[1]) / l,
        ]);
        obs
    }

    pub fn observation_dim(&self) -> usize {
        2 * self.joints() + 6
    }

    /// Jacobian-transpose controller towards the target, saturated to the bounds.
    pub fn oracle_action(&self, state: &ReacherState) -> Vec<f64> {
        let tip = self.fingertip(&state.joint_angles);
        let err = [state.target[0] - tip[0], state.target[1] - tip[1]];
        let mut heading = 0.0;
        let mut joint_pos = Vec::with_capacity(self.joints());
        let mut p = [0.0, 0.0];
        for (&theta, &len) in state.joint_angles.iter().zip(&self.segments) {
            joint_pos.push(p);
            heading += theta;
            p[0] += len * heading.cos();
            p[1] += len * heading.sin();
        }
        let gain = 10.0 / self.arm_length().powi(2);
        joint_pos
            .iter()
            .map(|j| {
                // column of the Jacobian for a revolute joint: z × (tip − joint)
                let (jx, jy) = (-(tip[1] - j[1]), tip[0] - j[0]);
                (gain * (jx * err[0] + jy * err[1])).clamp(-1.0, 1.0)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_task(joints: usize) -> ReacherTask {
        ReacherTask::new(
            joints,
            &ReacherConfig {
                segment_lengths: Some(vec![1.0; joints]),
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn straight_arm_fingertip() {
        let t = unit_task(3);
        let tip = t.fingertip(&[0.0; 3]);
        assert!((tip[0] - 3.0).abs() < 1e-15 && tip[1].abs() < 1e-15);
    }

    #[test]
    fn folded_arm_fingertip() {
        let t = unit_task(2);
        let tip = t.fingertip(&[PI / 2.0, -PI / 2.0]);
        assert!((tip[0] - 1.0).abs() < 1e-12 && (tip[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_action_keeps_angles() {
        let t = unit_task(3);
        let s = ReacherState {
            joint_angles: vec![0.3, -0.2, 0.1],
            target: [0.5, 1.0],
            steps_elapsed: 0,
        };
        let d = t.distance(&s);
        let (next, out) = t.step(&s, &[0.0; 3]).unwrap();
        assert_eq!(next.joint_angles, s.joint_angles);
        assert_eq!(out.reward, -d);
        assert_eq!(next.steps_elapsed, 1);
    }

    #[test]
    fn reaching_terminates_immediately() {
        let t = unit_task(3);
        // one step of +1 on the base joint brings the tip onto the target
        let after = t.fingertip(&[0.05, 0.0, 0.0]);
        let s = ReacherState {
            joint_angles: vec![0.0; 3],
            target: after,
            steps_elapsed: 0,
        };
        let (_, out) = t.step(&s, &[1.0, 0.0, 0.0]).unwrap();
        assert!(out.terminated && !out.truncated);
    }

    #[test]
    fn horizon_truncates() {
        let t = unit_task(3);
        let s = ReacherState {
            joint_angles: vec![0.0; 3],
            target: [-1.0, 0.5],
            steps_elapsed: 199,
        };
        let (_, out) = t.step(&s, &[0.0; 3]).unwrap();
        assert!(out.truncated && !out.terminated);
    }

    #[test]
    fn joint_limits_clamp() {
        let t = unit_task(3);
        let limit = PI - PI / 3.0;
        let s = ReacherState {
            joint_angles: vec![limit - 0.01, 0.0, -limit + 0.01],
            target: [1.0, 1.0],
            steps_elapsed: 0,
        };
        let (next, _) = t.step(&s, &[1.0, 0.0, -1.0]).unwrap();
        assert_eq!(next.joint_angles[0], limit);
        assert_eq!(next.joint_angles[2], -limit);
    }

    #[test]
    fn out_of_bounds_action_rejected() {
        let t = unit_task(3);
        let s = t.reset(&mut ChaCha8Rng::seed_from_u64(0));
        assert!(t.step(&s, &[1.5, 0.0, 0.0]).is_err());
        assert!(t.step(&s, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn reset_is_seeded() {
        let t = unit_task(4);
        let a = t.reset(&mut ChaCha8Rng::seed_from_u64(11));
        let b = t.reset(&mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
        assert_eq!(a.steps_elapsed, 0);
    }

    #[test]
    fn oracle_reaches_most_targets() {
        let t = ReacherTask::new(3, &ReacherConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut reached = 0;
        for _ in 0..50 {
            let mut s = t.reset(&mut rng);
            loop {
                let (next, out) = t.step(&s, &t.oracle_action(&s)).unwrap();
                s = next;
                if out.terminated {
                    reached += 1;
                }
                if out.terminated || out.truncated {
                    break;
                }
            }
        }
        assert!(reached >= 45, "{reached}");
    }
}
