//! Minimal neural-network substrate: a parameter store, dense and embedding
//! layers with explicit forward/backward pairs, softmax, Adagrad, and a
//! central-difference gradient checker.

mod gradcheck;
mod layers;
mod optim;
mod params;
mod tensor;

pub use gradcheck::{finite_diff_check, relative_error, FiniteDiffReport, GroupError};
pub use layers::{
    embed_pool, embed_pool_backward, log_softmax, sigmoid, softmax, Activation, DenseCache,
    DenseLayer, EmbeddingLayer,
};
pub use optim::{Adagrad, DEFAULT_EPSILON};
pub use params::{xavier_uniform, Gradient, Gradients, Param, ParamId, ParamKind, ParamStore};
pub use tensor::{dot, Tensor};
