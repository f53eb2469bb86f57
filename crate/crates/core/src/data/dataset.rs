//! On-disk phantom datasets.
//!
//! ```text
//! <root>/manifest.json
//! <root>/<split>/<case_id>/mod_F.htf, mod_T1.htf, mod_T1c.htf, mod_T2.htf
//! <root>/<split>/<case_id>/label.htf
//! ```

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::normalize::{
    apply_stats, estimate_stats, normalize_image, IntensityStats, NormalizationScope,
};
use crate::data::phantom::{generate_case, modality_names, Case, PhantomConfig, NUM_MODALITIES};
use crate::error::{Error, Result};
use crate::htf;
use crate::labels::LabelMap;
use crate::model::ModalityMask;
use crate::rng::Rng;

pub const MANIFEST_VERSION: u32 = 1;
pub const MIN_CASES: usize = 10;
pub const SPLITS: [&str; 3] = ["train", "valid", "test"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub cases: usize,
    pub seed: u64,
    pub phantom: PhantomConfig,
    pub normalization: NormalizationScope,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            cases: 100,
            seed: 0,
            phantom: PhantomConfig::default(),
            normalization: NormalizationScope::PerCase,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitLists {
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationRecord {
    pub scope: NormalizationScope,
    /// Per modality. For per-case scope these are averages of the per-image
    /// statistics and are informational only.
    pub stats: Vec<IntensityStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    /// `[height, width]`.
    pub dims: [usize; 2],
    pub difficulty: f64,
    pub lesion_probability: f64,
    pub modality_names: Vec<String>,
    pub splits: SplitLists,
    pub normalization: NormalizationRecord,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub train: Vec<Case>,
    pub valid: Vec<Case>,
    pub test: Vec<Case>,
}

impl Dataset {
    pub fn split(&self, name: &str) -> Option<&[Case]> {
        match name {
            "train" => Some(&self.train),
            "valid" => Some(&self.valid),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

/// `(train, valid, test)` sizes: ⌊0.7n⌋, ⌊0.1n⌋ and the rest.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = n * 7 / 10;
    let valid = n / 10;
    (train, valid, n - train - valid)
}

pub fn case_id(index: usize) -> String {
    format!("case_{index:04}")
}

fn average_stats(all: &[IntensityStats]) -> IntensityStats {
    let n = all.len() as f64;
    let avg = |f: fn(&IntensityStats) -> f64| all.iter().map(f).sum::<f64>() / n;
    IntensityStats {
        clip_low: avg(|s| s.clip_low),
        clip_high: avg(|s| s.clip_high),
        mean: avg(|s| s.mean),
        std: avg(|s| s.std),
    }
}

/// Generate and normalize a dataset in memory.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    if cfg.cases < MIN_CASES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_CASES} cases, got {}",
            cfg.cases
        )));
    }
    cfg.phantom.validate()?;
    let mut cases: Vec<Case> = (0..cfg.cases)
        .into_par_iter()
        .map(|i| generate_case(case_id(i), &mut Rng::derive(cfg.seed, i as u64), &cfg.phantom))
        .collect::<Result<_>>()?;
    let (n_train, n_valid, _) = split_sizes(cfg.cases);

    let stats: Vec<IntensityStats> = match cfg.normalization {
        NormalizationScope::PerCase => {
            let per_case: Vec<Vec<IntensityStats>> = cases
                .par_iter_mut()
                .map(|case| {
                    case.images
                        .iter_mut()
                        .map(|img| {
                            let (out, s) = normalize_image(img)?;
                            *img = out;
                            Ok(s)
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?;
            (0..NUM_MODALITIES)
                .map(|m| average_stats(&per_case.iter().map(|s| s[m]).collect::<Vec<_>>()))
                .collect()
        }
        NormalizationScope::Dataset => {
            let stats = (0..NUM_MODALITIES)
                .map(|m| {
                    let values: Vec<f64> = cases[..n_train]
                        .iter()
                        .flat_map(|c| c.images[m].as_slice().iter().map(|&v| v as f64))
                        .collect();
                    estimate_stats(&values)
                })
                .collect::<Result<Vec<_>>>()?;
            for case in &mut cases {
                for (img, s) in case.images.iter_mut().zip(&stats) {
                    *img = apply_stats(img, s)?;
                }
            }
            stats
        }
    };

    let test = cases.split_off(n_train + n_valid);
    let valid = cases.split_off(n_train);
    let train = cases;
    let ids = |v: &[Case]| v.iter().map(|c| c.id.clone()).collect();
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        seed: cfg.seed,
        dims: [cfg.phantom.height, cfg.phantom.width],
        difficulty: cfg.phantom.difficulty,
        lesion_probability: cfg.phantom.lesion_probability,
        modality_names: modality_names(),
        splits: SplitLists {
            train: ids(&train),
            valid: ids(&valid),
            test: ids(&test),
        },
        normalization: NormalizationRecord {
            scope: cfg.normalization,
            stats,
        },
    };
    Ok(Dataset {
        manifest,
        train,
        valid,
        test,
    })
}

pub fn write_case(case: &Case, dir: &Path, names: &[String]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (img, name) in case.images.iter().zip(names) {
        htf::save(img, dir.join(format!("mod_{name}.htf")))?;
    }
    htf::save(&case.labels.to_tensor(), dir.join("label.htf"))
}

pub fn read_case(id: &str, dir: &Path, names: &[String]) -> Result<Case> {
    let images = names
        .iter()
        .map(|name| htf::load::<f32>(dir.join(format!("mod_{name}.htf"))))
        .collect::<Result<Vec<_>>>()?;
    let labels = LabelMap::from_tensor(&htf::load(dir.join("label.htf"))?)?;
    for img in &images {
        let (c, h, w) = img.dims3()?;
        if c != 1 || h != labels.height() || w != labels.width() {
            return Err(Error::shape(&[1, labels.height(), labels.width()], img.shape()));
        }
    }
    Ok(Case {
        id: id.to_string(),
        images,
        labels,
        available: ModalityMask::full(names.len())?,
    })
}

pub fn write_dataset(ds: &Dataset, root: &Path) -> Result<()> {
    fs::create_dir_all(root)?;
    let names = &ds.manifest.modality_names;
    for split in SPLITS {
        let cases = ds.split(split).expect("known split");
        cases
            .par_iter()
            .map(|c| write_case(c, &root.join(split).join(&c.id), names))
            .collect::<Result<Vec<_>>>()?;
    }
    let mut json = serde_json::to_string_pretty(&ds.manifest)?;
    json.push('\n');
    fs::write(root.join("manifest.json"), json)?;
    Ok(())
}

/// Generate, normalize and write a dataset under `root`.
pub fn build_dataset(root: &Path, cfg: &DatasetConfig) -> Result<DatasetManifest> {
    let ds = generate_dataset(cfg)?;
    write_dataset(&ds, root)?;
    Ok(ds.manifest)
}

pub fn load_manifest(root: &Path) -> Result<DatasetManifest> {
    let manifest: DatasetManifest = serde_json::from_slice(&fs::read(root.join("manifest.json"))?)
        .map_err(|e| Error::Malformed(format!("manifest: {e}")))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::UnsupportedVersion(manifest.version));
    }
    if manifest.modality_names.is_empty() {
        return Err(Error::Malformed("manifest lists no modalities".into()));
    }
    Ok(manifest)
}

pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let manifest = load_manifest(root)?;
    let names = &manifest.modality_names;
    let load = |split: &str, ids: &[String]| -> Result<Vec<Case>> {
        ids.par_iter()
            .map(|id| read_case(id, &root.join(split).join(id), names))
            .collect()
    };
    let train = load("train", &manifest.splits.train)?;
    let valid = load("valid", &manifest.splits.valid)?;
    let test = load("test", &manifest.splits.test)?;
    Ok(Dataset {
        manifest,
        train,
        valid,
        test,
    })
}
