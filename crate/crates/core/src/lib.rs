pub mod baselines;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod losses;
pub mod model;
pub mod pipeline;
pub mod retrieval;
pub mod math;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use data::{CategoryId, ItemIdx};

/// Double-precision model, the default for training and evaluation.
pub type Model = model::Alcir<f64>;
/// Single-precision model, e.g. for a compact serving index.
pub type ModelF32 = model::Alcir<f32>;
pub type Index = retrieval::CategoryIndex<f64>;
pub type Store = math::ParamStore<f64>;
pub type Array = math::DenseArray<f64>;
