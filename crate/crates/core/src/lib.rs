//! A small CNN training engine: dense tensors, layers with exact
//! backpropagation, SGD with gradient accumulation and mixed precision, a
//! learning-rate range finder, augmentation (flip, lighting, affine, crops,
//! mixup, TTA), PPM datasets, checkpoints and weighted ensembles.

pub mod augment;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Precision, Shape2D, Tensor};
