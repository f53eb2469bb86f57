//! Conventional comparison methods: a network trained on complete inputs
//! whose missing modalities are filled in at test time, either with zeros
//! (the mean of standardized images) or with regressor predictions.

pub mod mlp;

pub use mlp::{
    decode_bundle, encode_bundle, imputation_keys, load_bundle, mlp_impute, save_bundle,
    train_imputation_mlps,
    ImputationBundle, ImputationMlp, MlpConfig,
};

use crate::data::Case;
use crate::error::{Error, Result};
use crate::model::{HemisParams, ModalityMask};
use crate::training::{train, TrainConfig, TrainOutcome};

fn check_mask(case: &Case, mask: ModalityMask) -> Result<()> {
    if mask.n() != case.images.len() {
        return Err(Error::InvalidArgument(format!(
            "mask covers {} modalities, case {} has {}",
            mask.n(),
            case.id,
            case.images.len()
        )));
    }
    Ok(())
}

/// Replace every modality absent from `mask` with an all-zero image.
pub fn mean_fill(case: &Case, mask: ModalityMask) -> Result<Case> {
    check_mask(case, mask)?;
    let mut out = case.clone();
    for k in mask.missing() {
        out.images[k] = out.images[k].zeros_like();
    }
    Ok(out)
}

/// The same architecture trained with every modality present throughout.
pub fn train_baseline_network(
    params: HemisParams<f32>,
    train_cases: &[Case],
    valid_cases: &[Case],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let cfg = TrainConfig {
        curriculum: false,
        ..*cfg
    };
    train(params, train_cases, valid_cases, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_case, PhantomConfig};
    use crate::rng::Rng;

    fn case() -> Case {
        let cfg = PhantomConfig {
            height: 32,
            width: 32,
            ..PhantomConfig::default()
        };
        generate_case("c", &mut Rng::new(1), &cfg).unwrap()
    }

    #[test]
    fn full_mask_is_identity() {
        let c = case();
        assert_eq!(mean_fill(&c, ModalityMask::full(4).unwrap()).unwrap(), c);
    }

    #[test]
    fn absent_modality_becomes_zero_and_others_are_untouched() {
        let c = case();
        let m = ModalityMask::from_indices(4, &[0, 2, 3]).unwrap();
        let out = mean_fill(&c, m).unwrap();
        assert!(out.images[1].as_slice().iter().all(|&v| v == 0.0));
        for k in [0, 2, 3] {
            assert!(out.images[k].bitwise_eq(&c.images[k]));
        }
        assert_eq!(out.labels, c.labels);
        assert_eq!(mean_fill(&out, m).unwrap(), out);
    }

    #[test]
    fn empty_mask_is_unrepresentable() {
        assert!(matches!(ModalityMask::new(&[false; 4]), Err(Error::EmptyMask)));
    }

    #[test]
    fn single_modality_still_feeds_all_pipelines() {
        let c = case();
        let out = mean_fill(&c, ModalityMask::from_indices(4, &[2]).unwrap()).unwrap();
        assert_eq!(out.images.len(), 4);
        assert_eq!(out.image_slots().iter().filter(|s| s.is_some()).count(), 4);
    }
}
