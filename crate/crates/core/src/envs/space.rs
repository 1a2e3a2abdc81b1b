use serde::{Deserialize, Serialize};

use super::EnvError;

/// Box bounds of a continuous action vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousActionSpec {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ContinuousActionSpec {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self, EnvError> {
        let spec = Self { low, high };
        spec.validate()?;
        Ok(spec)
    }

    /// `dims` dimensions bounded by `[-bound, bound]`.
    pub fn symmetric(dims: usize, bound: f64) -> Result<Self, EnvError> {
        Self::new(vec![-bound; dims], vec![bound; dims])
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.low.is_empty() || self.low.len() != self.high.len() {
            return Err(EnvError::InvalidSpec(format!(
                "{} lower and {} upper bounds",
                self.low.len(),
                self.high.len()
            )));
        }
        for (d, (l, h)) in self.low.iter().zip(&self.high).enumerate() {
            if !(l.is_finite() && h.is_finite() && l < h) {
                return Err(EnvError::InvalidSpec(format!(
                    "dimension {d} has bounds [{l}, {h}]"
                )));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.low.len()
    }

    pub fn contains(&self, action: &[f64]) -> bool {
        action.len() == self.dims()
            && action
                .iter()
                .zip(self.low.iter().zip(&self.high))
                .all(|(a, (l, h))| (*l..=*h).contains(a))
    }

    pub(crate) fn check(&self, action: &[f64]) -> Result<(), EnvError> {
        if self.contains(action) {
            Ok(())
        } else {
            Err(EnvError::InvalidAction(format!(
                "{action:?} outside bounds {:?}..{:?}",
                self.low, self.high
            )))
        }
    }
}

/// Uniform grid of `bins` actuator values per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedActionSpace {
    spec: ContinuousActionSpec,
    bins: usize,
    grid: Vec<Vec<f64>>,
}

impl DiscretizedActionSpace {
    pub fn build_grid(spec: &ContinuousActionSpec, bins: usize) -> Result<Self, EnvError> {
        spec.validate()?;
        if bins < 2 {
            return Err(EnvError::InvalidSpec(format!(
                "need at least 2 sub-actions per dimension, got {bins}"
            )));
        }
        let grid = spec
            .low
            .iter()
            .zip(&spec.high)
            .map(|(&l, &h)| {
                let step = (h - l) / (bins - 1) as f64;
                let mut row: Vec<f64> = (0..bins).map(|i| l + i as f64 * step).collect();
                row[bins - 1] = h;
                row
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            bins,
            grid,
        })
    }

    pub fn spec(&self) -> &ContinuousActionSpec {
        &self.spec
    }

    pub fn dims(&self) -> usize {
        self.grid.len()
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn grid(&self) -> &[Vec<f64>] {
        &self.grid
    }

    /// `n^N`, or `None` when it does not fit in 128 bits.
    pub fn joint_count(&self) -> Option<u128> {
        (self.bins as u128).checked_pow(self.dims() as u32)
    }

    pub fn decode(&self, indices: &[usize]) -> Result<Vec<f64>, EnvError> {
        self.check_indices(indices)?;
        Ok(indices
            .iter()
            .zip(&self.grid)
            .map(|(&i, row)| row[i])
            .collect())
    }

    /// Grid index closest to `value` in dimension `d`, clamping outside values.
    pub fn nearest_index(&self, d: usize, value: f64) -> usize {
        let (l, h) = (self.spec.low[d], self.spec.high[d]);
        let pos = (value - l) / (h - l) * (self.bins - 1) as f64;
        if pos.is_nan() || pos <= 0.0 {
            0
        } else {
            (pos.round() as usize).min(self.bins - 1)
        }
    }

    pub fn encode(&self, action: &[f64]) -> Result<Vec<usize>, EnvError> {
        if action.len() != self.dims() {
            return Err(EnvError::InvalidAction(format!(
                "expected {} components, got {}",
                self.dims(),
                action.len()
            )));
        }
        Ok(action
            .iter()
            .enumerate()
            .map(|(d, &v)| self.nearest_index(d, v))
            .collect())
    }

    /// Row-major joint index: `(i, j)` over `n` bins maps to `i*n + j`.
    pub fn flat_index(&self, indices: &[usize]) -> Result<usize, EnvError> {
        self.check_indices(indices)?;
        let mut flat: usize = 0;
        for &i in indices {
            flat = flat
                .checked_mul(self.bins)
                .and_then(|f| f.checked_add(i))
                .ok_or_else(|| EnvError::InvalidAction("joint index overflows usize".into()))?;
        }
        Ok(flat)
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims()];
        for slot in out.iter_mut().rev() {
            *slot = flat % self.bins;
            flat /= self.bins;
        }
        out
    }

    fn check_indices(&self, indices: &[usize]) -> Result<(), EnvError> {
        if indices.len() != self.dims() {
            return Err(EnvError::InvalidAction(format!(
                "expected {} sub-actions, got {}",
                self.dims(),
                indices.len()
            )));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.bins) {
            return Err(EnvError::InvalidAction(format!(
                "sub-action {bad} out of range for {} bins",
                self.bins
            )));
        }
        Ok(())
    }
}
