//! Action-branching dueling Q-network.
//!
//! A shared trunk maps the state to a latent vector. One state-value head and
//! one advantage head per action dimension read the latent, and an
//! aggregation layer combines `V(s)` with each branch's advantages into that
//! branch's Q-vector. On the way back the combined gradient from all heads is
//! rescaled before it enters the trunk.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{GradScale, NnError, ParamDump, Sequential, Tensor};

#[derive(Debug, Error)]
pub enum BranchError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("advantage vector is empty")]
    EmptyAdvantages,
    #[error("network layouts differ: {0}")]
    LayoutMismatch(String),
}

/// How `V(s)` and a branch's advantages combine into Q-values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// `Q = V + (A - mean A)`
    #[default]
    Mean,
    /// `Q = V + A`
    Naive,
    /// `Q = V + (A - max A)`
    Max,
}

impl Aggregation {
    pub fn apply(self, value: f64, advantages: &[f64]) -> Result<Vec<f64>, BranchError> {
        match self {
            Aggregation::Mean => aggregate_mean(value, advantages),
            Aggregation::Naive => Ok(aggregate_naive(value, advantages)),
            Aggregation::Max => aggregate_max(value, advantages),
        }
    }

    /// The per-branch constant subtracted from every advantage.
    fn offset(self, advantages: &[f64]) -> f64 {
        match self {
            Aggregation::Mean => advantages.iter().sum::<f64>() / advantages.len() as f64,
            Aggregation::Naive => 0.0,
            Aggregation::Max => advantages.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

pub fn aggregate_mean(value: f64, advantages: &[f64]) -> Result<Vec<f64>, BranchError> {
    if advantages.is_empty() {
        return Err(BranchError::EmptyAdvantages);
    }
    let mean = Aggregation::Mean.offset(advantages);
    Ok(advantages.iter().map(|a| value + (a - mean)).collect())
}

pub fn aggregate_naive(value: f64, advantages: &[f64]) -> Vec<f64> {
    advantages.iter().map(|a| value + a).collect()
}

pub fn aggregate_max(value: f64, advantages: &[f64]) -> Result<Vec<f64>, BranchError> {
    if advantages.is_empty() {
        return Err(BranchError::EmptyAdvantages);
    }
    let max = Aggregation::Max.offset(advantages);
    Ok(advantages.iter().map(|a| value + (a - max)).collect())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Per-dimension argmax of each branch's Q-vector.
pub fn greedy_action<Q: AsRef<[f64]>>(qvalues: &[Q]) -> Vec<usize> {
    qvalues.iter().map(|q| argmax(q.as_ref())).collect()
}

fn default_shared_sizes() -> Vec<usize> {
    vec![512, 256]
}

fn default_branch_hidden() -> usize {
    128
}

/// Shape of a branching Q-network over `action_dims` dimensions with
/// `bins_per_dim` sub-actions each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchingSpec {
    pub state_dim: usize,
    pub action_dims: usize,
    pub bins_per_dim: usize,
    #[serde(default = "default_shared_sizes")]
    pub shared_sizes: Vec<usize>,
    #[serde(default = "default_branch_hidden")]
    pub branch_hidden: usize,
    /// Hidden width of the state-value head; `None` uses `branch_hidden`.
    #[serde(default)]
    pub value_hidden: Option<usize>,
    #[serde(default)]
    pub aggregation: Aggregation,
    /// Factor applied to the trunk gradient; `None` means `1/(N+1)`.
    #[serde(default)]
    pub trunk_grad_scale: Option<f64>,
}

impl BranchingSpec {
    pub fn new(state_dim: usize, action_dims: usize, bins_per_dim: usize) -> Self {
        Self {
            state_dim,
            action_dims,
            bins_per_dim,
            shared_sizes: default_shared_sizes(),
            branch_hidden: default_branch_hidden(),
            value_hidden: None,
            aggregation: Aggregation::Mean,
            trunk_grad_scale: None,
        }
    }

    pub fn validate(&self) -> Result<(), BranchError> {
        if self.action_dims < 1 {
            return Err(BranchError::InvalidSpec("need at least one action dimension".into()));
        }
        if self.bins_per_dim < 2 {
            return Err(BranchError::InvalidSpec(format!(
                "need at least two sub-actions per dimension, got {}",
                self.bins_per_dim
            )));
        }
        Ok(())
    }

    pub fn grad_scale(&self) -> f64 {
        self.trunk_grad_scale
            .unwrap_or(1.0 / (self.action_dims as f64 + 1.0))
    }

    pub fn layout(&self) -> Result<NetworkLayout, BranchError> {
        self.validate()?;
        Ok(NetworkLayout {
            state_dim: self.state_dim,
            head_sizes: vec![self.bins_per_dim; self.action_dims],
            shared_sizes: self.shared_sizes.clone(),
            branch_hidden: self.branch_hidden,
            value_hidden: self.value_hidden.unwrap_or(self.branch_hidden),
            aggregation: self.aggregation,
            trunk_grad_scale: self.grad_scale(),
        })
    }
}

/// Fully resolved network shape. Flat dueling networks are the special case
/// of a single head with `n^N` outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkLayout {
    pub state_dim: usize,
    pub head_sizes: Vec<usize>,
    pub shared_sizes: Vec<usize>,
    /// `0` connects a head's output layer straight to the latent.
    pub branch_hidden: usize,
    pub value_hidden: usize,
    pub aggregation: Aggregation,
    pub trunk_grad_scale: f64,
}

impl NetworkLayout {
    pub fn validate(&self) -> Result<(), BranchError> {
        if self.state_dim == 0 {
            return Err(BranchError::InvalidSpec("state dimension must be positive".into()));
        }
        if self.head_sizes.is_empty() || self.head_sizes.contains(&0) {
            return Err(BranchError::InvalidSpec(
                "every advantage head needs at least one output".into(),
            ));
        }
        if self.shared_sizes.is_empty() || self.shared_sizes.contains(&0) {
            return Err(BranchError::InvalidSpec("shared trunk needs nonzero widths".into()));
        }
        if !self.trunk_grad_scale.is_finite() {
            return Err(BranchError::InvalidSpec("gradient scale must be finite".into()));
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        *self.shared_sizes.last().expect("validated non-empty trunk")
    }

    /// Advantage outputs plus the single state-value output.
    pub fn output_count(&self) -> usize {
        self.head_sizes.iter().sum::<usize>() + 1
    }
}

/// Batched network outputs. `advantages[d]` and `q[d]` are `[batch × n_d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QOutput {
    pub value: Vec<f64>,
    pub advantages: Vec<Tensor>,
    pub q: Vec<Tensor>,
}

impl QOutput {
    /// Q-vectors of one batch row, one per branch.
    pub fn row(&self, index: usize) -> Vec<Vec<f64>> {
        self.q.iter().map(|q| q.row(index).to_vec()).collect()
    }

    pub fn batch_size(&self) -> usize {
        self.value.len()
    }
}

#[derive(Debug, Clone)]
pub struct BranchingQNetwork {
    layout: NetworkLayout,
    trunk: Sequential,
    rescale: GradScale,
    value_head: Sequential,
    advantage_heads: Vec<Sequential>,
    recorded_advantages: Option<Vec<Tensor>>,
}

fn head<R: Rng + ?Sized>(
    latent: usize,
    hidden: usize,
    outputs: usize,
    rng: &mut R,
) -> Result<Sequential, NnError> {
    if hidden == 0 {
        Sequential::mlp(&[latent, outputs], true, rng)
    } else {
        Sequential::mlp(&[latent, hidden, outputs], true, rng)
    }
}

impl BranchingQNetwork {
    pub fn new<R: Rng + ?Sized>(spec: &BranchingSpec, rng: &mut R) -> Result<Self, BranchError> {
        Self::from_layout(spec.layout()?, rng)
    }

    pub fn from_layout<R: Rng + ?Sized>(
        layout: NetworkLayout,
        rng: &mut R,
    ) -> Result<Self, BranchError> {
        layout.validate()?;
        let mut trunk_sizes = vec![layout.state_dim];
        trunk_sizes.extend_from_slice(&layout.shared_sizes);
        let trunk = Sequential::mlp(&trunk_sizes, false, rng)?;
        let latent = layout.latent_dim();
        let value_head = head(latent, layout.value_hidden, 1, rng)?;
        let advantage_heads = layout
            .head_sizes
            .iter()
            .map(|&n| head(latent, layout.branch_hidden, n, rng))
            .collect::<Result<Vec<_>, _>>()?;
        let rescale = GradScale::new(layout.trunk_grad_scale)?;
        Ok(Self {
            layout,
            trunk,
            rescale,
            value_head,
            advantage_heads,
            recorded_advantages: None,
        })
    }

    pub fn layout(&self) -> &NetworkLayout {
        &self.layout
    }

    pub fn branch_count(&self) -> usize {
        self.advantage_heads.len()
    }

    pub fn grad_scale(&self) -> f64 {
        self.rescale.factor
    }

    /// Replaces the trunk gradient factor (used by ablations).
    pub fn set_grad_scale(&mut self, factor: f64) -> Result<(), BranchError> {
        self.rescale = GradScale::new(factor)?;
        self.layout.trunk_grad_scale = factor;
        Ok(())
    }

    pub fn trunk(&self) -> &Sequential {
        &self.trunk
    }

    pub fn value_head(&self) -> &Sequential {
        &self.value_head
    }

    pub fn advantage_heads(&self) -> &[Sequential] {
        &self.advantage_heads
    }

    pub fn advantage_output_count(&self) -> usize {
        self.layout.head_sizes.iter().sum()
    }

    pub fn output_count(&self) -> usize {
        self.layout.output_count()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn check_input(&self, states: &Tensor) -> Result<(), BranchError> {
        if states.shape().len() != 2 || states.cols() != self.layout.state_dim {
            return Err(NnError::ShapeMismatch {
                context: "network input",
                expected: format!("[batch × {}]", self.layout.state_dim),
                found: format!("{:?}", states.shape()),
            }
            .into());
        }
        Ok(())
    }

    fn aggregate(&self, value: &Tensor, advantages: Vec<Tensor>) -> QOutput {
        let value = value.values().to_vec();
        let q = advantages
            .iter()
            .map(|adv| {
                let mut q = adv.clone();
                for (b, row) in (0..adv.rows()).zip(q.values_mut().chunks_exact_mut(adv.cols())) {
                    let offset = self.layout.aggregation.offset(row);
                    row.iter_mut().for_each(|a| *a = value[b] + (*a - offset));
                }
                q
            })
            .collect();
        QOutput {
            value,
            advantages,
            q,
        }
    }

    /// Evaluates a `[batch × state_dim]` input without recording anything.
    pub fn infer(&self, states: &Tensor) -> Result<QOutput, BranchError> {
        self.check_input(states)?;
        let latent = self.trunk.infer(states)?;
        let value = self.value_head.infer(&latent)?;
        let advantages = self
            .advantage_heads
            .iter()
            .map(|h| h.infer(&latent))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.aggregate(&value, advantages))
    }

    /// Like [`infer`](Self::infer) but records activations for [`backward`](Self::backward).
    pub fn forward(&mut self, states: &Tensor) -> Result<QOutput, BranchError> {
        self.check_input(states)?;
        let latent = self.trunk.forward(states)?;
        let latent = self.rescale.forward(&latent);
        let value = self.value_head.forward(&latent)?;
        let advantages = self
            .advantage_heads
            .iter_mut()
            .map(|h| h.forward(&latent))
            .collect::<Result<Vec<_>, _>>()?;
        self.recorded_advantages = Some(advantages.clone());
        Ok(self.aggregate(&value, advantages))
    }

    /// Backpropagates `dL/dQ_d` for every branch into all parameter gradients.
    pub fn backward(&mut self, grad_q: &[Tensor]) -> Result<(), BranchError> {
        let advantages = self
            .recorded_advantages
            .take()
            .ok_or(NnError::BackwardBeforeForward)?;
        if grad_q.len() != advantages.len()
            || grad_q
                .iter()
                .zip(&advantages)
                .any(|(g, a)| g.shape() != a.shape())
        {
            return Err(NnError::ShapeMismatch {
                context: "Q gradient",
                expected: format!("{} branches matching the forward outputs", advantages.len()),
                found: format!("{} branches", grad_q.len()),
            }
            .into());
        }
        let batch = advantages[0].rows();
        let mut grad_value = vec![0.0; batch];
        let mut grad_latent: Option<Tensor> = None;
        let accumulate = |acc: &mut Option<Tensor>, g: Tensor| match acc {
            Some(t) => t
                .values_mut()
                .iter_mut()
                .zip(g.values())
                .for_each(|(a, b)| *a += b),
            None => *acc = Some(g),
        };
        for ((g, adv), head) in grad_q
            .iter()
            .zip(&advantages)
            .zip(&mut self.advantage_heads)
        {
            let n = adv.cols();
            let mut grad_adv = g.clone();
            for b in 0..batch {
                let gq = g.row(b);
                let total: f64 = gq.iter().sum();
                grad_value[b] += total;
                let ga = grad_adv.row_mut(b);
                match self.layout.aggregation {
                    Aggregation::Naive => {}
                    Aggregation::Mean => {
                        let mean = total / n as f64;
                        ga.iter_mut().for_each(|v| *v -= mean);
                    }
                    Aggregation::Max => ga[argmax(adv.row(b))] -= total,
                }
            }
            accumulate(&mut grad_latent, head.backward(&grad_adv)?);
        }
        let gv = Tensor::new(vec![batch, 1], grad_value)?;
        accumulate(&mut grad_latent, self.value_head.backward(&gv)?);
        let grad_latent = grad_latent.expect("at least one head");
        self.trunk.backward(&self.rescale.backward(&grad_latent))?;
        Ok(())
    }

    /// Q-vectors for a single state.
    pub fn q_values(&self, state: &[f64]) -> Result<Vec<Vec<f64>>, BranchError> {
        Ok(self.infer(&Tensor::row_vector(state))?.row(0))
    }

    pub fn greedy(&self, state: &[f64]) -> Result<Vec<usize>, BranchError> {
        Ok(greedy_action(&self.q_values(state)?))
    }

    /// Trunk, value head, then advantage heads, each `weight, bias` per layer.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut p = self.trunk.params();
        p.extend(self.value_head.params());
        for h in &self.advantage_heads {
            p.extend(h.params());
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.trunk.params_mut();
        p.extend(self.value_head.params_mut());
        for h in &mut self.advantage_heads {
            p.extend(h.params_mut());
        }
        p
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = self.trunk.param_names("trunk");
        names.extend(self.value_head.param_names("value"));
        for (d, h) in self.advantage_heads.iter().enumerate() {
            names.extend(h.param_names(&format!("advantage{d}")));
        }
        names
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Copies every parameter value from `other`, which must share the layout.
    pub fn copy_params_from(&mut self, other: &BranchingQNetwork) -> Result<(), BranchError> {
        if self.layout != other.layout {
            return Err(BranchError::LayoutMismatch(format!(
                "{:?} vs {:?}",
                self.layout, other.layout
            )));
        }
        for (dst, src) in self.params_mut().into_iter().zip(other.params()) {
            dst.copy_values_from(src)?;
        }
        Ok(())
    }

    pub fn dump_into(&self, prefix: &str, dump: &mut ParamDump) {
        for (name, p) in self.param_names().into_iter().zip(self.params()) {
            dump.push(format!("{prefix}{name}"), p);
        }
    }

    pub fn load_from(&mut self, prefix: &str, dump: &mut ParamDump) -> Result<(), BranchError> {
        for (name, p) in self.param_names().into_iter().zip(self.params_mut()) {
            let t = dump.take(&format!("{prefix}{name}"))?;
            p.copy_values_from(&t)?;
        }
        Ok(())
    }
}

/// Makes `target` an exact copy of `online`.
pub fn sync_target(
    online: &BranchingQNetwork,
    target: &mut BranchingQNetwork,
) -> Result<(), BranchError> {
    target.copy_params_from(online)
}

/// Fires at every positive multiple of `period` environment steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncSchedule {
    pub period: u64,
}

impl Default for SyncSchedule {
    fn default() -> Self {
        Self { period: 1000 }
    }
}

impl SyncSchedule {
    pub fn fires(&self, step: u64) -> bool {
        self.period > 0 && step > 0 && step.is_multiple_of(self.period)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Adam, AdamConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mean_aggregation_hand_value() {
        assert_eq!(aggregate_mean(2.0, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn mean_aggregation_constant_advantages() {
        for c in [-4.0, 0.0, 17.5] {
            assert_eq!(aggregate_mean(1.25, &[c; 4]).unwrap(), vec![1.25; 4]);
        }
        assert_eq!(aggregate_mean(3.0, &[9.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn empty_advantages_rejected() {
        assert!(matches!(aggregate_mean(0.0, &[]), Err(BranchError::EmptyAdvantages)));
        assert!(aggregate_max(0.0, &[]).is_err());
    }

    #[test]
    fn naive_aggregation_hand_value() {
        assert_eq!(aggregate_naive(2.0, &[1.0, 2.0, 3.0]), vec![3.0, 4.0, 5.0]);
        assert_eq!(aggregate_naive(2.0, &[0.0; 3]), vec![2.0; 3]);
    }

    #[test]
    fn naive_minus_mean_is_branch_mean() {
        let adv = [0.3, -1.2, 4.4, 2.0];
        let mean = adv.iter().sum::<f64>() / 4.0;
        let naive = aggregate_naive(0.7, &adv);
        let local = aggregate_mean(0.7, &adv).unwrap();
        for (a, b) in naive.iter().zip(&local) {
            assert!((a - b - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn max_aggregation_hand_value() {
        let q = aggregate_max(0.0, &[1.0, 3.0, 2.0]).unwrap();
        assert_eq!(q, vec![-2.0, 0.0, -1.0]);
        assert_eq!(q.iter().copied().fold(f64::MIN, f64::max), 0.0);
        assert_eq!(aggregate_max(1.5, &[2.0; 3]).unwrap(), vec![1.5; 3]);
    }

    #[test]
    fn greedy_per_dimension_with_low_tie_break() {
        let q = vec![vec![1.0, 5.0, 2.0], vec![7.0, 0.0, 0.0]];
        assert_eq!(greedy_action(&q), vec![1, 0]);
        assert_eq!(greedy_action(&[vec![3.0; 5]]), vec![0]);
    }

    fn small_spec() -> BranchingSpec {
        BranchingSpec {
            shared_sizes: vec![8, 6],
            branch_hidden: 5,
            ..BranchingSpec::new(4, 2, 3)
        }
    }

    #[test]
    fn output_shape_contract() {
        let net = BranchingQNetwork::new(&small_spec(), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let q = net.q_values(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(q.len(), 2);
        assert!(q.iter().all(|v| v.len() == 3));
        assert_eq!(net.output_count(), 7);
    }

    #[test]
    fn mean_aggregation_average_equals_value() {
        let net = BranchingQNetwork::new(&small_spec(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let out = net
            .infer(&Tensor::from_rows(&[[0.5, -1.0, 2.0, 0.0], [1.0, 1.0, 1.0, 1.0]]).unwrap())
            .unwrap();
        for b in 0..2 {
            for q in &out.q {
                let mean = q.row(b).iter().sum::<f64>() / 3.0;
                assert!((mean - out.value[b]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn state_dimension_mismatch_rejected() {
        let net = BranchingQNetwork::new(&small_spec(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(net.q_values(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(BranchingSpec::new(3, 0, 5).validate().is_err());
        assert!(BranchingSpec::new(3, 2, 1).validate().is_err());
        let mut spec = BranchingSpec::new(3, 2, 5);
        spec.shared_sizes.clear();
        assert!(BranchingQNetwork::new(&spec, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn hand_set_tiny_network() {
        // state_dim 1, trunk [2], one branch of 2, no hidden layers in the heads
        let spec = BranchingSpec {
            shared_sizes: vec![2],
            branch_hidden: 0,
            value_hidden: Some(0),
            ..BranchingSpec::new(1, 1, 2)
        };
        let mut net = BranchingQNetwork::new(&spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let set: [&[f64]; 6] = [
            &[1.0, -2.0],      // trunk weight [2x1]
            &[0.5, 0.0],       // trunk bias
            &[2.0, 3.0],       // value weight [1x2]
            &[0.25],           // value bias
            &[1.0, 0.0, 0.0, 1.0], // advantage weight [2x2]
            &[0.0, 1.0],       // advantage bias
        ];
        for (p, v) in net.params_mut().into_iter().zip(set) {
            p.values_mut().copy_from_slice(v);
        }
        // x = 1.5: pre = [2.0, -3.0] -> h = [2, 0]; V = 4.25; A = [2, 1]
        // mean A = 1.5 -> Q = [4.75, 3.75]
        let q = net.q_values(&[1.5]).unwrap();
        assert_eq!(q, vec![vec![4.75, 3.75]]);
    }

    #[test]
    fn default_rescale_is_one_over_branches_plus_one() {
        let net = BranchingQNetwork::new(&BranchingSpec { shared_sizes: vec![4], branch_hidden: 4, ..BranchingSpec::new(2, 5, 3) }, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(net.grad_scale(), 1.0 / 6.0);
    }

    #[test]
    fn sync_copies_without_aliasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut online = BranchingQNetwork::new(&small_spec(), &mut rng).unwrap();
        let mut target = BranchingQNetwork::new(&small_spec(), &mut rng).unwrap();
        assert_ne!(online.params()[0], target.params()[0]);
        sync_target(&online, &mut target).unwrap();
        for (a, b) in online.params().iter().zip(target.params()) {
            assert_eq!(a.values(), b.values());
        }
        let before: Vec<Vec<f64>> = target.params().iter().map(|p| p.values().to_vec()).collect();
        let x = Tensor::row_vector(&[0.1, 0.2, 0.3, 0.4]);
        let out = online.forward(&x).unwrap();
        let grads: Vec<Tensor> = out.q.iter().map(|q| {
            let mut g = q.clone();
            g.values_mut().iter_mut().for_each(|v| *v = 1.0);
            g
        }).collect();
        online.backward(&grads).unwrap();
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        adam.step(&mut online.params_mut()).unwrap();
        let after: Vec<Vec<f64>> = target.params().iter().map(|p| p.values().to_vec()).collect();
        assert_eq!(before, after);
        assert_ne!(online.params()[0].values(), target.params()[0].values());
    }

    #[test]
    fn sync_rejects_mismatched_layouts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = BranchingQNetwork::new(&small_spec(), &mut rng).unwrap();
        let mut other = small_spec();
        other.bins_per_dim = 4;
        let mut b = BranchingQNetwork::new(&other, &mut rng).unwrap();
        assert!(matches!(sync_target(&a, &mut b), Err(BranchError::LayoutMismatch(_))));
    }

    #[test]
    fn sync_schedule_fires_on_multiples() {
        let s = SyncSchedule::default();
        let fired: Vec<u64> = (0..=3500).filter(|&t| s.fires(t)).collect();
        assert_eq!(fired, vec![1000, 2000, 3000]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = BranchingQNetwork::new(&small_spec(), &mut rng).unwrap();
        let mut dump = ParamDump::default();
        net.dump_into("online.", &mut dump);
        let mut buf = Vec::new();
        dump.write_to(&mut buf).unwrap();
        let mut back = ParamDump::read_from(buf.as_slice()).unwrap();
        let mut other = BranchingQNetwork::new(&small_spec(), &mut rng).unwrap();
        other.load_from("online.", &mut back).unwrap();
        for (a, b) in net.params().iter().zip(other.params()) {
            assert_eq!(a.values(), b.values());
        }
    }
}
