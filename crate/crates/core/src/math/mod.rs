//! Differentiable compute: dense arrays, a parameter store, a gradient tape
//! with reversal and stop-gradient nodes, MLPs, and the optimizer.

mod mlp;
pub mod ops;
mod optim;
mod params;
mod tape;
mod tensor;

pub use mlp::{Activation, Mlp, MlpSpec};
pub use ops::{cosine_similarity, softmax_probabilities};
pub use optim::{Optimizer, UpdateRule};
pub use params::{ParamId, ParamStore};
pub use tape::{gradient_array, Gradients, NodeGradients, Tape, Var, LOG_FLOOR};
pub use tensor::DenseArray;
