//! The hetero-modal network: per-modality back ends, moment fusion, shared
//! front end.

pub mod container;
pub mod fusion;
pub mod mask;
pub mod network;
pub mod params;

pub use container::{decode_model, encode_model, load_model, save_model, SavedModel};
pub use fusion::{fuse, fuse_backward, fuse_indexed, FusionMoments};
pub use mask::{ModalityMask, MAX_MODALITIES};
pub use network::{
    backend_forward, forward_with_tape, frontend_forward, loss_and_grads, loss_only,
    model_backward, model_forward, predict_segmentation, GradScope, GradientTape,
    ModalityImages,
};
pub use params::{ArchConfig, BackendParams, HemisParams};
