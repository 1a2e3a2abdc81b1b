//! Experience replay: a proportional prioritized buffer backed by a sum tree,
//! and a uniform buffer for ablations.

mod snapshot;
mod sum_tree;

pub use sum_tree::SumTree;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("replay holds {size} transitions, cannot sample a batch of {batch}")]
    Underfull { size: usize, batch: usize },
    #[error("priority index {index} is beyond the {size} stored transitions")]
    StaleIndex { index: usize, size: usize },
    #[error("priority update needs one error per index ({indices} indices, {errors} errors)")]
    LengthMismatch { indices: usize, errors: usize },
    #[error("prioritization error must be finite and non-negative, got {0}")]
    InvalidError(f64),
    #[error("invalid replay configuration: {0}")]
    InvalidConfig(String),
    #[error("replay snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One environment interaction. `action` holds one sub-action index per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<usize>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// How a batch of uniform draws is spread over the priority mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingScheme {
    /// One draw from each of `batch` equal slices of the total mass.
    #[default]
    Stratified,
    /// Independent draws over the whole mass.
    Iid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorityConfig {
    pub alpha: f64,
    pub beta0: f64,
    /// Linear per-step increment of β towards 1.
    pub beta_increment: f64,
    pub priority_epsilon: f64,
    pub capacity: usize,
    #[serde(default)]
    pub sampling: SamplingScheme,
}

impl Default for PriorityConfig {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            beta0: 0.4,
            beta_increment: 3e-7,
            priority_epsilon: 1e-8,
            capacity: 1_000_000,
            sampling: SamplingScheme::Stratified,
        }
    }
}

impl PriorityConfig {
    pub fn validate(&self) -> Result<(), ReplayError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(ReplayError::InvalidConfig(format!("alpha {} not in [0, 1]", self.alpha)));
        }
        if !(self.beta0 > 0.0 && self.beta0 <= 1.0) {
            return Err(ReplayError::InvalidConfig(format!("beta0 {} not in (0, 1]", self.beta0)));
        }
        if self.capacity == 0 {
            return Err(ReplayError::InvalidConfig("capacity must be positive".into()));
        }
        if !(self.priority_epsilon >= 0.0) || !(self.beta_increment >= 0.0) {
            return Err(ReplayError::InvalidConfig("negative epsilon or increment".into()));
        }
        Ok(())
    }

    pub fn beta(&self, step: u64) -> f64 {
        beta_schedule(self.beta0, self.beta_increment, step)
    }
}

/// `min(1, β0 + η·step)`.
pub fn beta_schedule(beta0: f64, increment: f64, step: u64) -> f64 {
    (beta0 + increment * step as f64).min(1.0)
}

/// A sampled minibatch: slot indices, normalised importance weights and the
/// transitions themselves.
#[derive(Debug, Clone)]
pub struct SampledBatch<'a> {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    pub transitions: Vec<&'a Transition>,
}

/// Mass positions in `[0, total)` for one batch.
fn draw_masses<R: Rng + ?Sized>(
    scheme: SamplingScheme,
    batch: usize,
    total: f64,
    rng: &mut R,
) -> Vec<f64> {
    match scheme {
        SamplingScheme::Stratified => {
            let segment = total / batch as f64;
            (0..batch)
                .map(|i| (i as f64 + rng.random::<f64>()) * segment)
                .collect()
        }
        SamplingScheme::Iid => (0..batch).map(|_| rng.random::<f64>() * total).collect(),
    }
}

/// Ring storage shared by both buffer kinds.
#[derive(Debug, Clone, PartialEq)]
struct Ring {
    capacity: usize,
    items: Vec<Transition>,
    cursor: usize,
}

impl Ring {
    fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: Vec::new(),
            cursor: 0,
        }
    }

    fn push(&mut self, t: Transition) -> usize {
        let slot = self.cursor;
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[slot] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        slot
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrioritizedReplay {
    config: PriorityConfig,
    ring: Ring,
    /// Leaves hold `p^α`.
    tree: SumTree,
    /// Leaves hold raw priorities `p`, for the max-priority rule.
    raw: SumTree,
}

impl PrioritizedReplay {
    pub fn new(config: PriorityConfig) -> Result<Self, ReplayError> {
        config.validate()?;
        Ok(Self {
            ring: Ring::new(config.capacity),
            tree: SumTree::new(config.capacity),
            raw: SumTree::new(config.capacity),
            config,
        })
    }

    pub fn config(&self) -> &PriorityConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.ring.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.items.is_empty()
    }

    pub fn write_cursor(&self) -> usize {
        self.ring.cursor
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.ring.items.get(index)
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    /// Raw priority `p` of a stored slot.
    pub fn priority(&self, index: usize) -> Option<f64> {
        (index < self.len()).then(|| self.raw.get(index))
    }

    /// Largest stored raw priority, or `1.0` when empty.
    pub fn max_priority(&self) -> f64 {
        if self.is_empty() {
            1.0
        } else {
            self.raw.max()
        }
    }

    /// Stores `t` with the current maximum priority and returns its slot.
    pub fn add(&mut self, t: Transition) -> usize {
        let priority = self.max_priority();
        let slot = self.ring.push(t);
        self.set_priority(slot, priority);
        slot
    }

    fn set_priority(&mut self, slot: usize, priority: f64) {
        self.raw.set(slot, priority);
        self.tree.set(slot, priority.powf(self.config.alpha));
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch: usize,
        beta: f64,
        rng: &mut R,
    ) -> Result<SampledBatch<'_>, ReplayError> {
        let size = self.len();
        if batch == 0 || size < batch {
            return Err(ReplayError::Underfull { size, batch });
        }
        let total = self.tree.total();
        let indices: Vec<usize> = draw_masses(self.config.sampling, batch, total, rng)
            .into_iter()
            .map(|m| self.tree.find_prefix(m).min(size - 1))
            .collect();
        let mut weights: Vec<f64> = indices
            .iter()
            .map(|&i| (size as f64 * self.tree.get(i) / total).powf(-beta))
            .collect();
        let max_w = weights.iter().copied().fold(0.0, f64::max);
        weights.iter_mut().for_each(|w| *w /= max_w);
        let transitions = indices.iter().map(|&i| &self.ring.items[i]).collect();
        Ok(SampledBatch {
            indices,
            weights,
            transitions,
        })
    }

    /// Sets slot priorities to `e + ε` for each prioritization error `e`.
    pub fn update_priorities(&mut self, indices: &[usize], errors: &[f64]) -> Result<(), ReplayError> {
        if indices.len() != errors.len() {
            return Err(ReplayError::LengthMismatch {
                indices: indices.len(),
                errors: errors.len(),
            });
        }
        let size = self.len();
        for (&i, &e) in indices.iter().zip(errors) {
            if i >= size {
                return Err(ReplayError::StaleIndex { index: i, size });
            }
            if !(e.is_finite() && e >= 0.0) {
                return Err(ReplayError::InvalidError(e));
            }
        }
        for (&i, &e) in indices.iter().zip(errors) {
            self.set_priority(i, e + self.config.priority_epsilon);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniformReplay {
    ring: Ring,
    sampling: SamplingScheme,
}

impl UniformReplay {
    pub fn new(capacity: usize, sampling: SamplingScheme) -> Result<Self, ReplayError> {
        if capacity == 0 {
            return Err(ReplayError::InvalidConfig("capacity must be positive".into()));
        }
        Ok(Self {
            ring: Ring::new(capacity),
            sampling,
        })
    }

    pub fn len(&self) -> usize {
        self.ring.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ring.items.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        self.ring.items.get(index)
    }

    pub fn add(&mut self, t: Transition) -> usize {
        self.ring.push(t)
    }

    /// Same draw scheme as the prioritized buffer with unit priorities;
    /// weights are all one.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch: usize,
        rng: &mut R,
    ) -> Result<SampledBatch<'_>, ReplayError> {
        let size = self.len();
        if batch == 0 || size < batch {
            return Err(ReplayError::Underfull { size, batch });
        }
        let indices: Vec<usize> = draw_masses(self.sampling, batch, size as f64, rng)
            .into_iter()
            .map(|m| (m.floor() as usize).min(size - 1))
            .collect();
        let transitions = indices.iter().map(|&i| &self.ring.items[i]).collect();
        Ok(SampledBatch {
            weights: vec![1.0; batch],
            indices,
            transitions,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayKind {
    #[default]
    Prioritized,
    Uniform,
}

/// Either buffer behind one interface.
#[derive(Debug, Clone, PartialEq)]
pub enum Replay {
    Prioritized(PrioritizedReplay),
    Uniform(UniformReplay),
}

impl Replay {
    pub fn new(kind: ReplayKind, config: PriorityConfig) -> Result<Self, ReplayError> {
        Ok(match kind {
            ReplayKind::Prioritized => Replay::Prioritized(PrioritizedReplay::new(config)?),
            ReplayKind::Uniform => {
                config.validate()?;
                Replay::Uniform(UniformReplay::new(config.capacity, config.sampling)?)
            }
        })
    }

    pub fn len(&self) -> usize {
        match self {
            Replay::Prioritized(r) => r.len(),
            Replay::Uniform(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn add(&mut self, t: Transition) -> usize {
        match self {
            Replay::Prioritized(r) => r.add(t),
            Replay::Uniform(r) => r.add(t),
        }
    }

    pub fn get(&self, index: usize) -> Option<&Transition> {
        match self {
            Replay::Prioritized(r) => r.get(index),
            Replay::Uniform(r) => r.get(index),
        }
    }

    pub fn write_cursor(&self) -> usize {
        match self {
            Replay::Prioritized(r) => r.ring.cursor,
            Replay::Uniform(r) => r.ring.cursor,
        }
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        batch: usize,
        beta: f64,
        rng: &mut R,
    ) -> Result<SampledBatch<'_>, ReplayError> {
        match self {
            Replay::Prioritized(r) => r.sample(batch, beta, rng),
            Replay::Uniform(r) => r.sample(batch, rng),
        }
    }

    /// No-op for the uniform buffer.
    pub fn update_priorities(&mut self, indices: &[usize], errors: &[f64]) -> Result<(), ReplayError> {
        match self {
            Replay::Prioritized(r) => r.update_priorities(indices, errors),
            Replay::Uniform(_) => Ok(()),
        }
    }

    /// Mean raw priority over stored slots (`None` for the uniform buffer).
    pub fn mean_priority(&self) -> Option<f64> {
        match self {
            Replay::Prioritized(r) if !r.is_empty() => Some(r.raw.total() / r.len() as f64),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn dummy(tag: f64) -> Transition {
        Transition {
            state: vec![tag],
            action: vec![0],
            reward: tag,
            next_state: vec![tag + 1.0],
            done: false,
        }
    }

    fn config(capacity: usize, alpha: f64) -> PriorityConfig {
        PriorityConfig {
            alpha,
            capacity,
            ..PriorityConfig::default()
        }
    }

    #[test]
    fn first_insert_gets_unit_priority() {
        let mut r = PrioritizedReplay::new(config(4, 0.6)).unwrap();
        let slot = r.add(dummy(0.0));
        assert_eq!(r.priority(slot), Some(1.0));
    }

    #[test]
    fn insert_takes_current_max_priority() {
        let mut r = PrioritizedReplay::new(config(8, 0.6)).unwrap();
        r.add(dummy(0.0));
        r.add(dummy(1.0));
        r.update_priorities(&[0, 1], &[0.5, 3.0]).unwrap();
        let slot = r.add(dummy(2.0));
        assert!((r.priority(slot).unwrap() - 3.0).abs() < 1e-7);
        assert_eq!(r.priority(slot), r.priority(1));
    }

    #[test]
    fn ring_overwrites_oldest() {
        let mut r = PrioritizedReplay::new(config(2, 0.6)).unwrap();
        r.add(dummy(0.0));
        r.add(dummy(1.0));
        let slot = r.add(dummy(2.0));
        assert_eq!(slot, 0);
        assert_eq!(r.len(), 2);
        assert_eq!(r.get(0).unwrap().reward, 2.0);
        assert_eq!(r.get(1).unwrap().reward, 1.0);
    }

    #[test]
    fn zero_error_floors_at_epsilon() {
        let mut r = PrioritizedReplay::new(config(2, 0.6)).unwrap();
        r.add(dummy(0.0));
        r.update_priorities(&[0], &[0.0]).unwrap();
        assert_eq!(r.priority(0), Some(1e-8));
    }

    #[test]
    fn stale_index_rejected() {
        let mut r = PrioritizedReplay::new(config(4, 0.6)).unwrap();
        r.add(dummy(0.0));
        assert!(matches!(
            r.update_priorities(&[1], &[1.0]),
            Err(ReplayError::StaleIndex { index: 1, size: 1 })
        ));
        assert!(r.update_priorities(&[0], &[f64::NAN]).is_err());
    }

    #[test]
    fn underfull_sample_rejected() {
        let mut r = PrioritizedReplay::new(config(4, 0.6)).unwrap();
        r.add(dummy(0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            r.sample(2, 0.4, &mut rng),
            Err(ReplayError::Underfull { size: 1, batch: 2 })
        ));
    }

    #[test]
    fn equal_priorities_give_unit_weights() {
        let mut r = PrioritizedReplay::new(config(16, 0.6)).unwrap();
        for i in 0..10 {
            r.add(dummy(i as f64));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = r.sample(5, 0.7, &mut rng).unwrap();
        assert!(b.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn weights_in_unit_interval() {
        let mut r = PrioritizedReplay::new(config(16, 0.6)).unwrap();
        for i in 0..10 {
            r.add(dummy(i as f64));
        }
        let errs: Vec<f64> = (0..10).map(|i| i as f64 * 0.7).collect();
        r.update_priorities(&(0..10).collect::<Vec<_>>(), &errs).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = r.sample(8, 0.5, &mut rng).unwrap();
        assert!(b.weights.iter().all(|&w| w > 0.0 && w <= 1.0));
        assert!(b.weights.iter().any(|&w| w == 1.0));
    }

    #[test]
    fn beta_schedule_values() {
        let c = PriorityConfig::default();
        assert_eq!(c.beta(0), 0.4);
        assert_eq!(c.beta(2_000_000), 1.0);
        assert_eq!(c.beta(10_000_000), 1.0);
        assert!((c.beta(1_000_000) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(PrioritizedReplay::new(config(0, 0.6)).is_err());
        assert!(PrioritizedReplay::new(config(4, 1.5)).is_err());
        let c = PriorityConfig {
            beta0: 0.0,
            ..PriorityConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn alpha_zero_beta_zero_matches_uniform() {
        for scheme in [SamplingScheme::Stratified, SamplingScheme::Iid] {
            let cfg = PriorityConfig {
                alpha: 0.0,
                capacity: 64,
                sampling: scheme,
                ..PriorityConfig::default()
            };
            let mut p = PrioritizedReplay::new(cfg).unwrap();
            let mut u = UniformReplay::new(64, scheme).unwrap();
            for i in 0..37 {
                p.add(dummy(i as f64));
                u.add(dummy(i as f64));
            }
            let errs: Vec<f64> = (0..37).map(|i| (i % 5) as f64).collect();
            p.update_priorities(&(0..37).collect::<Vec<_>>(), &errs).unwrap();
            let mut r1 = ChaCha8Rng::seed_from_u64(42);
            let mut r2 = ChaCha8Rng::seed_from_u64(42);
            for _ in 0..50 {
                let a = p.sample(16, 0.0, &mut r1).unwrap();
                let b = u.sample(16, &mut r2).unwrap();
                assert_eq!(a.indices, b.indices);
                assert_eq!(a.weights, b.weights);
            }
        }
    }
}
