//! Layer primitives with hand-derived backward passes.

pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod loss;
pub mod pool;
pub mod relu;
pub mod sgd;

pub use conv::{ConvCache, ConvGrads, ConvLayer};
pub use dense::{DenseGrads, DenseLayer};
pub use gradcheck::{grad_check, relative_error, GradCheckEntry, GradCheckReport, ParamSet};
pub use loss::{cross_entropy_loss, pixel_softmax, LossOutput};
pub use pool::{maxpool2d_s1_backward, maxpool2d_s1_forward, MaxPoolCache};
pub use relu::{relu_backward, relu_forward};
pub use sgd::{SgdConfig, SgdState};
