//! Hetero-modal image segmentation: a convolutional network whose
//! per-modality feature stacks are fused by their mean and variance, so any
//! non-empty subset of input modalities can be segmented without imputation.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`). Training
//! runs in `f32`; gradient checks use `f64`.

pub mod baselines;
pub mod data;
pub mod error;
pub mod eval;
pub mod htf;
pub mod labels;
pub mod model;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use labels::{BinaryMask, LabelMap};
pub use model::{ArchConfig, HemisParams, ModalityMask};
pub use rng::Rng;
pub use scalar::{DType, Scalar};
pub use tensor::Tensor;

pub type TensorF32 = Tensor<f32>;
pub type TensorF64 = Tensor<f64>;
pub type HemisF32 = HemisParams<f32>;
pub type HemisF64 = HemisParams<f64>;
