//! Dense-network substrate: tensors, layers with reverse-mode gradients,
//! gradient-scaling nodes, Adam and global-norm clipping.

mod checkpoint;
mod gemm;
mod layers;
mod optim;
mod tensor;

pub use checkpoint::{ParamDump, PARAMS_HEADER};
pub use layers::{scale_gradient, xavier_bound, xavier_init, GradScale, Linear, Op, Relu, Sequential};
pub use optim::{clip_gradients, global_grad_norm, Adam, AdamConfig};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },
    #[error("xavier init needs positive fan dimensions (fan_in={fan_in}, fan_out={fan_out})")]
    ZeroFan { fan_in: usize, fan_out: usize },
    #[error("backward called before forward")]
    BackwardBeforeForward,
    #[error("gradient scale factor must be finite, got {0}")]
    NonFiniteScale(f64),
    #[error("network needs at least one layer")]
    EmptyNetwork,
    #[error("invalid optimizer configuration: {0}")]
    InvalidOptimizer(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
