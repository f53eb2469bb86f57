//! Synthetic phantom data, normalization and dataset files.

pub mod dataset;
pub mod normalize;
pub mod phantom;

pub use dataset::{
    build_dataset, generate_dataset, load_dataset, load_manifest, read_case, split_sizes,
    write_case, write_dataset, Dataset, DatasetConfig, DatasetManifest,
};
pub use normalize::{normalize_image, IntensityStats, NormalizationScope};
pub use phantom::{generate_case, modality_names, Case, PhantomConfig, MODALITY_NAMES};

use crate::error::Result;
use crate::labels::{BinaryMask, LabelMap};

/// The three nested evaluation regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMaps {
    /// Any lesion class.
    pub complete: BinaryMask,
    /// Everything but edema.
    pub core: BinaryMask,
    pub enhancing: BinaryMask,
}

impl BinaryMaps {
    pub fn get(&self, category: Category) -> &BinaryMask {
        match category {
            Category::Complete => &self.complete,
            Category::Core => &self.core,
            Category::Enhancing => &self.enhancing,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Complete,
    Core,
    Enhancing,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Complete, Category::Core, Category::Enhancing];

    pub fn name(self) -> &'static str {
        match self {
            Category::Complete => "Complete",
            Category::Core => "Core",
            Category::Enhancing => "Enhancing",
        }
    }
}

pub fn derive_binary_maps(labels: &LabelMap) -> Result<BinaryMaps> {
    labels.check_classes(phantom::NUM_CLASSES)?;
    Ok(BinaryMaps {
        complete: labels.mask_of(|l| l >= 1),
        core: labels.mask_of(|l| l >= 2),
        enhancing: labels.mask_of(|l| l == 3),
    })
}
