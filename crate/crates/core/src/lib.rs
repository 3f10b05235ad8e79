pub mod augment;
pub mod autograd;
pub mod data;
pub mod eece;
pub mod experiment;
pub mod embedding;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod lexicon;
pub mod metrics;
pub mod model;
pub mod params;
pub mod sade;
pub mod scalar;
pub mod tensor;
pub mod text;
pub mod train;

pub use error::{Error, Result};
pub use model::{Model, ModelConfig};
pub use params::ParameterStore;
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type ParameterStore32 = ParameterStore<f32>;
pub type ParameterStore64 = ParameterStore<f64>;
pub type Model32 = Model<f32>;
pub type Model64 = Model<f64>;
