//! Curriculum training of the network on image patches.

pub mod curriculum;
pub mod sampler;
pub mod trainer;

pub use curriculum::{sample_dropping, Curriculum, Phase};
pub use sampler::{extract_patch, PatchCenter, PatchSampler};
pub use trainer::{history_tsv, train, write_history, EpochRecord, TrainConfig, TrainOutcome};
