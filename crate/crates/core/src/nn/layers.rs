use rand::Rng;

use super::gemm::{gemm, Layout};
use super::{NnError, Tensor};

/// Uniform Glorot/Xavier initialisation of a `[fan_out × fan_in]` weight matrix.
///
/// Entries are drawn from `U(-√(6/(fan_in+fan_out)), +√(6/(fan_in+fan_out)))`.
pub fn xavier_init<R: Rng + ?Sized>(
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Result<Tensor, NnError> {
    if fan_in == 0 || fan_out == 0 {
        return Err(NnError::ZeroFan { fan_in, fan_out });
    }
    let bound = xavier_bound(fan_in, fan_out);
    let values = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Tensor::new(vec![fan_out, fan_in], values)
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Fully connected layer `y = x·Wᵀ + b` with `W` stored as `[out × in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
    input: Option<Tensor>,
}

impl Linear {
    /// Xavier-initialised weights, zero biases.
    pub fn new<R: Rng + ?Sized>(
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        let weight = xavier_init(fan_in, fan_out, rng)?;
        Ok(Self {
            weight,
            bias: Tensor::zeros(vec![fan_out]),
            input: None,
        })
    }

    pub fn from_parts(weight: Tensor, bias: Tensor) -> Result<Self, NnError> {
        if weight.shape().len() != 2 || bias.shape() != [weight.shape()[0]] {
            return Err(NnError::ShapeMismatch {
                context: "linear layer",
                expected: "weight [out × in] with bias [out]".into(),
                found: format!("weight {:?}, bias {:?}", weight.shape(), bias.shape()),
            });
        }
        Ok(Self {
            weight,
            bias,
            input: None,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        x.expect_cols(self.fan_in(), "linear input")?;
        let batch = x.rows();
        let out = self.fan_out();
        let mut y = Vec::with_capacity(batch * out);
        for _ in 0..batch {
            y.extend_from_slice(self.bias.values());
        }
        gemm(
            batch,
            self.fan_in(),
            out,
            1.0,
            x.values(),
            Layout::Normal,
            self.weight.values(),
            Layout::Transposed,
            1.0,
            &mut y,
        );
        Tensor::new(vec![batch, out], y)
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the input.
    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let input = self.input.take().ok_or(NnError::BackwardBeforeForward)?;
        grad_out.expect_cols(self.fan_out(), "linear output gradient")?;
        let batch = input.rows();
        if grad_out.rows() != batch {
            return Err(NnError::ShapeMismatch {
                context: "linear output gradient",
                expected: format!("{batch} rows"),
                found: format!("{} rows", grad_out.rows()),
            });
        }
        let (fan_in, fan_out) = (self.fan_in(), self.fan_out());
        let gw = self.weight.grad_or_zero();
        gemm(
            fan_out,
            batch,
            fan_in,
            1.0,
            grad_out.values(),
            Layout::Transposed,
            input.values(),
            Layout::Normal,
            1.0,
            gw,
        );
        let gb = self.bias.grad_or_zero();
        for row in grad_out.values().chunks_exact(fan_out) {
            for (g, d) in gb.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut gx = vec![0.0; batch * fan_in];
        gemm(
            batch,
            fan_out,
            fan_in,
            1.0,
            grad_out.values(),
            Layout::Normal,
            self.weight.values(),
            Layout::Normal,
            0.0,
            &mut gx,
        );
        Tensor::new(vec![batch, fan_in], gx)
    }
}

/// Rectified linear unit.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn infer(&self, x: &Tensor) -> Tensor {
        let mut y = x.clone();
        y.clear_grad();
        y.values_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        y
    }

    pub fn forward(&mut self, x: &Tensor) -> Tensor {
        self.mask = Some(x.values().iter().map(|&v| v > 0.0).collect());
        self.infer(x)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let mask = self.mask.take().ok_or(NnError::BackwardBeforeForward)?;
        if mask.len() != grad_out.len() {
            return Err(NnError::ShapeMismatch {
                context: "relu gradient",
                expected: format!("{} values", mask.len()),
                found: format!("{} values", grad_out.len()),
            });
        }
        let mut g = grad_out.clone();
        for (v, &on) in g.values_mut().iter_mut().zip(&mask) {
            if !on {
                *v = 0.0;
            }
        }
        Ok(g)
    }
}

/// Identity in the forward pass; multiplies the gradient by `factor` in the backward pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradScale {
    pub factor: f64,
}

impl GradScale {
    pub fn new(factor: f64) -> Result<Self, NnError> {
        if !factor.is_finite() {
            return Err(NnError::NonFiniteScale(factor));
        }
        Ok(Self { factor })
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.clone()
    }

    pub fn backward(&self, grad_out: &Tensor) -> Tensor {
        let mut g = grad_out.clone();
        if self.factor != 1.0 {
            g.values_mut().iter_mut().for_each(|v| *v *= self.factor);
        }
        g
    }
}

/// Functional form of [`GradScale`]: returns the forward value and the node to
/// apply on the way back.
pub fn scale_gradient(x: &Tensor, factor: f64) -> Result<(Tensor, GradScale), NnError> {
    let node = GradScale::new(factor)?;
    Ok((node.forward(x), node))
}

#[derive(Debug, Clone)]
pub enum Op {
    Linear(Linear),
    Relu(Relu),
    Scale(GradScale),
}

/// Ordered stack of operations evaluated on `[batch × features]` inputs.
#[derive(Debug, Clone, Default)]
pub struct Sequential {
    ops: Vec<Op>,
}

impl Sequential {
    pub fn new(ops: Vec<Op>) -> Self {
        Self { ops }
    }

    /// Dense stack through `sizes` (`sizes[0]` is the input width). Every
    /// layer is followed by a ReLU except the last one when `linear_output`.
    pub fn mlp<R: Rng + ?Sized>(
        sizes: &[usize],
        linear_output: bool,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        if sizes.len() < 2 {
            return Err(NnError::EmptyNetwork);
        }
        let mut ops = Vec::with_capacity(2 * sizes.len());
        let last = sizes.len() - 2;
        for (i, w) in sizes.windows(2).enumerate() {
            ops.push(Op::Linear(Linear::new(w[0], w[1], rng)?));
            if !(linear_output && i == last) {
                ops.push(Op::Relu(Relu::default()));
            }
        }
        Ok(Self { ops })
    }

    pub fn ops(&self) -> &[Op] {
        &self.ops
    }

    pub fn input_dim(&self) -> Option<usize> {
        self.linears().next().map(Linear::fan_in)
    }

    pub fn output_dim(&self) -> Option<usize> {
        self.linears().last().map(Linear::fan_out)
    }

    pub fn linears(&self) -> impl Iterator<Item = &Linear> {
        self.ops.iter().filter_map(|op| match op {
            Op::Linear(l) => Some(l),
            _ => None,
        })
    }

    pub fn linears_mut(&mut self) -> impl Iterator<Item = &mut Linear> {
        self.ops.iter_mut().filter_map(|op| match op {
            Op::Linear(l) => Some(l),
            _ => None,
        })
    }

    pub fn infer(&self, x: &Tensor) -> Result<Tensor, NnError> {
        let mut h = x.clone();
        for op in &self.ops {
            h = match op {
                Op::Linear(l) => l.infer(&h)?,
                Op::Relu(r) => r.infer(&h),
                Op::Scale(s) => s.forward(&h),
            };
        }
        Ok(h)
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let mut h = x.clone();
        for op in &mut self.ops {
            h = match op {
                Op::Linear(l) => l.forward(&h)?,
                Op::Relu(r) => r.forward(&h),
                Op::Scale(s) => s.forward(&h),
            };
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let mut g = grad_out.clone();
        for op in self.ops.iter_mut().rev() {
            g = match op {
                Op::Linear(l) => l.backward(&g)?,
                Op::Relu(r) => r.backward(&g)?,
                Op::Scale(s) => s.backward(&g),
            };
        }
        Ok(g)
    }

    /// Parameters in a stable order: `weight, bias` per linear layer.
    pub fn params(&self) -> Vec<&Tensor> {
        self.linears().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.linears_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        let mut names = Vec::new();
        for (i, op) in self.ops.iter().enumerate() {
            if let Op::Linear(_) = op {
                names.push(format!("{prefix}.{i}.weight"));
                names.push(format!("{prefix}.{i}.bias"));
            }
        }
        names
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }
}
