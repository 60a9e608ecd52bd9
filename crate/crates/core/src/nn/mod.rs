//! Convolutional network layers with exact backpropagation and Adam.

pub mod activation;
pub mod adam;
pub mod batchnorm;
pub mod checkpoint;
pub mod conv;
pub mod dense;
pub mod loss;
pub mod model;
pub mod pool;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use model::{
    backward, batch_tensor, loss as batch_loss, model_forward, BlockConfig, ForwardPass, Mode,
    ModelConfig, ModelState, StageShape,
};
pub use tensor::Tensor;
