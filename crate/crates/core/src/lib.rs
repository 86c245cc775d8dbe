//! Proxy-supervised transfer learning for poverty mapping, desk scale.
//!
//! The pipeline: pretrain a small CNN on a synthetic object task, fine-tune
//! it to predict nighttime-light intensity bins from daytime tiles, convert
//! it to a fully convolutional feature extractor, and use the extracted
//! features in an L1-logistic-regression poverty classifier and a raster
//! poverty map.

pub mod augment;
pub mod autograd;
pub mod checkpoint;
pub mod cv;
pub mod dataset;
pub mod error;
pub mod features;
pub mod gmm;
pub mod gradcheck;
pub mod groups;
pub mod imageio;
pub mod logreg;
pub mod metrics;
pub mod net;
pub mod ops;
pub mod optim;
pub mod raster;
pub mod seed;
pub mod shapes;
pub mod survey;
pub mod tensor;
pub mod texture;
pub mod train;
pub mod viz;
pub mod transfer;
pub mod world;

pub use error::{Error, Result};
pub use tensor::Tensor;
