//! Two-phase patch training with early stopping.
//!
//! Phase 1 updates every parameter on class-balanced batches under the
//! modality curriculum. Phase 2 updates only the classification layer on
//! batches drawn from the natural label distribution. Each phase keeps the
//! parameters with the lowest validation loss seen, the pre-phase parameters
//! included.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Case;
use crate::error::{Error, Result};
use crate::model::{loss_and_grads, loss_only, GradScope, HemisParams, ModalityMask};
use crate::nn::{SgdConfig, SgdState};
use crate::rng::Rng;
use crate::training::curriculum::{sample_dropping, Curriculum, Phase};
use crate::training::sampler::{extract_patch, PatchCenter, PatchSampler};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub sgd: SgdConfig,
    pub warmup_epochs: usize,
    /// Phase-1 epoch limit, warmup included.
    pub max_epochs: usize,
    /// Phase-2 epoch limit; 0 skips the phase.
    pub finetune_epochs: usize,
    pub patience: usize,
    pub patch_size: usize,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    /// Validation patches per phase, drawn once.
    pub valid_patches: usize,
    pub p_keep_all: f64,
    pub p_drop_one: f64,
    /// Modality dropping after warmup; off for the baseline network.
    pub curriculum: bool,
    /// Keep dropping modalities while fine-tuning the final layer.
    pub phase2_dropping: bool,
    /// Draw a mask per patch instead of per batch.
    pub per_case_masking: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            sgd: SgdConfig::default(),
            warmup_epochs: 5,
            max_epochs: 60,
            finetune_epochs: 10,
            patience: 10,
            patch_size: 33,
            batch_size: 32,
            batches_per_epoch: 50,
            valid_patches: 512,
            p_keep_all: 0.5,
            p_drop_one: 0.25,
            curriculum: true,
            phase2_dropping: true,
            per_case_masking: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.p_keep_all < 0.0 || self.p_drop_one < 0.0 || self.p_keep_all + self.p_drop_one > 1.0 {
            return bad("need p_keep_all, p_drop_one >= 0 and p_keep_all + p_drop_one <= 1");
        }
        if self.curriculum && self.warmup_epochs >= self.max_epochs {
            return bad("warmup_epochs must be below max_epochs");
        }
        if self.patch_size % 2 == 0 {
            return bad("patch_size must be odd");
        }
        if self.batch_size == 0 || self.batches_per_epoch == 0 || self.valid_patches == 0 {
            return bad("batch_size, batches_per_epoch and valid_patches must be positive");
        }
        if self.sgd.learning_rate < 0.0 || self.sgd.decay < 0.0 {
            return bad("learning rate and decay must be non-negative");
        }
        Ok(())
    }

    fn curriculum(&self) -> Curriculum {
        Curriculum {
            enabled: self.curriculum,
            warmup_epochs: self.warmup_epochs,
            p_keep_all: self.p_keep_all,
            p_drop_one: self.p_drop_one,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 0 is the evaluation before any update; training epochs count from 1
    /// and continue across phases.
    pub epoch: usize,
    pub phase: Phase,
    pub train_loss: Option<f64>,
    pub valid_loss: f64,
    pub lr: f64,
    /// Masks drawn this epoch, keyed by presence string.
    pub masks: BTreeMap<String, usize>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: HemisParams<f32>,
    pub history: Vec<EpochRecord>,
    pub best_valid_loss: f64,
}

pub fn history_tsv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch\tphase\ttrain_loss\tvalid_loss\tlr\tmask_histogram\n");
    for r in history {
        let train = r.train_loss.map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
        let masks = r
            .masks
            .iter()
            .map(|(k, n)| format!("{k}={n}"))
            .collect::<Vec<_>>()
            .join(";");
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.6}\t{:.6e}\t{}",
            r.epoch,
            r.phase.name(),
            train,
            r.valid_loss,
            r.lr,
            if masks.is_empty() { "-" } else { &masks }
        );
    }
    out
}

pub fn write_history(history: &[EpochRecord], path: &Path) -> Result<()> {
    fs::write(path, history_tsv(history))?;
    Ok(())
}

#[derive(Debug, Clone)]
struct Sample {
    center: PatchCenter,
    mask: ModalityMask,
}

struct Patches {
    images: Vec<Option<crate::tensor::Tensor<f32>>>,
    labels: Vec<u8>,
    weights: Vec<f32>,
}

fn patches(cases: &[Case], s: &Sample, size: usize) -> Result<Patches> {
    let case = &cases[s.center.case];
    let images = (0..case.images.len())
        .map(|k| {
            s.mask
                .contains(k)
                .then(|| extract_patch(&case.images[k], s.center.row, s.center.col, size))
                .transpose()
        })
        .collect::<Result<Vec<_>>>()?;
    let mid = (size / 2) * size + size / 2;
    let mut labels = vec![0u8; size * size];
    let mut weights = vec![0.0f32; size * size];
    labels[mid] = s.center.label;
    weights[mid] = 1.0;
    Ok(Patches {
        images,
        labels,
        weights,
    })
}

fn sample_loss(params: &HemisParams<f32>, cases: &[Case], s: &Sample, size: usize) -> Result<f64> {
    let p = patches(cases, s, size)?;
    let slots: Vec<_> = p.images.iter().map(Option::as_ref).collect();
    Ok(loss_only(&slots, s.mask, &p.labels, &p.weights, params)? as f64)
}

/// Mean loss over `samples`, evaluated in parallel and summed in order.
fn mean_loss(params: &HemisParams<f32>, cases: &[Case], samples: &[Sample], size: usize) -> Result<f64> {
    let losses: Vec<f64> = samples
        .par_iter()
        .map(|s| sample_loss(params, cases, s, size))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / samples.len() as f64)
}

/// Mean loss and summed-then-averaged gradients of one batch.
fn batch_gradient(
    params: &HemisParams<f32>,
    cases: &[Case],
    batch: &[Sample],
    size: usize,
    scope: GradScope,
) -> Result<(f64, HemisParams<f32>)> {
    let parts: Vec<(f32, HemisParams<f32>)> = batch
        .par_iter()
        .map(|s| {
            let p = patches(cases, s, size)?;
            let slots: Vec<_> = p.images.iter().map(Option::as_ref).collect();
            loss_and_grads(&slots, s.mask, &p.labels, &p.weights, params, scope)
        })
        .collect::<Result<_>>()?;
    let mut iter = parts.into_iter();
    let (first_loss, mut total) = iter.next().expect("non-empty batch");
    let mut loss = first_loss as f64;
    for (l, g) in iter {
        loss += l as f64;
        total.add_assign(&g)?;
    }
    let n = batch.len() as f32;
    total.scale_in_place(1.0 / n);
    Ok((loss / batch.len() as f64, total))
}

/// Fixed validation patches; masks follow the dropping distribution when
/// the curriculum is on, full masks otherwise.
fn validation_set(
    cfg: &TrainConfig,
    valid: &[Case],
    sampler: &PatchSampler,
    n: usize,
    balanced: bool,
    stream: u64,
) -> Result<Vec<Sample>> {
    let mut rng = Rng::derive(cfg.seed, stream);
    let c = cfg.curriculum();
    (0..cfg.valid_patches)
        .map(|_| {
            let center = sampler.sample(&mut rng, valid, balanced)?;
            let mask = c.sample(Phase::Dropping, n, &mut rng);
            Ok(Sample { center, mask })
        })
        .collect()
}

struct PhaseSpec {
    scope: GradScope,
    balanced: bool,
    epochs: usize,
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    train: &'a [Case],
    valid: &'a [Case],
    train_sampler: PatchSampler,
    valid_sampler: PatchSampler,
    n: usize,
    rng: Rng,
    history: Vec<EpochRecord>,
    epoch: usize,
}

impl Trainer<'_> {
    fn draw_mask(&mut self, phase: Phase) -> ModalityMask {
        let c = self.cfg.curriculum();
        match phase {
            Phase::Finetune if c.enabled && self.cfg.phase2_dropping => {
                sample_dropping(self.n, c.p_keep_all, c.p_drop_one, &mut self.rng)
            }
            Phase::Finetune => ModalityMask::full(self.n).expect("valid modality count"),
            p => c.sample(p, self.n, &mut self.rng),
        }
    }

    fn run_phase(
        &mut self,
        params: &mut HemisParams<f32>,
        spec: PhaseSpec,
        valid_set: &[Sample],
    ) -> Result<f64> {
        let size = self.cfg.patch_size;
        let mut best_loss = mean_loss(params, self.valid, valid_set, size)?;
        let mut best = params.clone();
        let mut since_best = 0;
        let mut opt = SgdState::<f32>::new(self.cfg.sgd);
        if self.history.is_empty() {
            self.history.push(EpochRecord {
                epoch: 0,
                phase: Phase::Warmup,
                train_loss: None,
                valid_loss: best_loss,
                lr: opt.current_lr(),
                masks: BTreeMap::new(),
            });
        }

        for local in 0..spec.epochs {
            let phase = match spec.scope {
                GradScope::FinalLayer => Phase::Finetune,
                GradScope::All => self.cfg.curriculum().phase(local),
            };
            self.epoch += 1;
            let mut masks = BTreeMap::new();
            let mut train_loss = 0.0;
            for b in 0..self.cfg.batches_per_epoch {
                let batch_mask = self.draw_mask(phase);
                let centers =
                    self.train_sampler
                        .batch(&mut self.rng, self.train, self.cfg.batch_size, spec.balanced)?;
                let batch: Vec<Sample> = centers
                    .into_iter()
                    .map(|center| {
                        let mask = if self.cfg.per_case_masking {
                            self.draw_mask(phase)
                        } else {
                            batch_mask
                        };
                        *masks.entry(mask.to_string()).or_insert(0) += 1;
                        Sample { center, mask }
                    })
                    .collect();
                let (loss, grads) = batch_gradient(params, self.train, &batch, size, spec.scope)?;
                if !loss.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        epoch: self.epoch,
                        batch: b,
                    });
                }
                train_loss += loss;
                match spec.scope {
                    GradScope::All => {
                        let g = grads.tensors();
                        opt.step(&mut params.tensors_mut(), &g)?;
                    }
                    GradScope::FinalLayer => {
                        let g = grads.final_layer();
                        opt.step(&mut params.final_layer_mut(), &g)?;
                    }
                }
            }
            let valid_loss = mean_loss(params, self.valid, valid_set, size)?;
            if !valid_loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: self.epoch,
                    batch: self.cfg.batches_per_epoch,
                });
            }
            let train_loss = train_loss / self.cfg.batches_per_epoch as f64;
            log::info!(
                "epoch {} {} train {:.4} valid {:.4}",
                self.epoch,
                phase.name(),
                train_loss,
                valid_loss
            );
            self.history.push(EpochRecord {
                epoch: self.epoch,
                phase,
                train_loss: Some(train_loss),
                valid_loss,
                lr: opt.current_lr(),
                masks,
            });
            if valid_loss < best_loss {
                best_loss = valid_loss;
                best = params.clone();
                since_best = 0;
            } else {
                since_best += 1;
            }
            // no stopping before the curriculum has started dropping
            if phase != Phase::Warmup && since_best >= self.cfg.patience {
                break;
            }
        }
        *params = best;
        Ok(best_loss)
    }
}

/// Train `params` on the given splits.
pub fn train(
    params: HemisParams<f32>,
    train: &[Case],
    valid: &[Case],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    params.validate()?;
    let arch = params.arch;
    if let Some(c) = train.iter().chain(valid).find(|c| c.images.len() != arch.modalities) {
        return Err(Error::InvalidArgument(format!(
            "case {} has {} modalities, the model expects {}",
            c.id,
            c.images.len(),
            arch.modalities
        )));
    }
    let (_, reach) = arch.receptive_extent();
    if cfg.patch_size / 2 < reach {
        log::warn!(
            "patch size {} is smaller than the receptive field ({} pixels)",
            cfg.patch_size,
            2 * reach + 1
        );
    }
    let mut t = Trainer {
        cfg,
        train,
        valid,
        train_sampler: PatchSampler::new(train, arch.classes)?,
        valid_sampler: PatchSampler::new(valid, arch.classes)?,
        n: arch.modalities,
        rng: Rng::derive(cfg.seed, 0),
        history: Vec::new(),
        epoch: 0,
    };
    let mut params = params;

    let valid1 = validation_set(cfg, valid, &t.valid_sampler, t.n, true, 1)?;
    let mut best = t.run_phase(
        &mut params,
        PhaseSpec {
            scope: GradScope::All,
            balanced: true,
            epochs: cfg.max_epochs,
        },
        &valid1,
    )?;
    if cfg.finetune_epochs > 0 {
        let valid2 = validation_set(cfg, valid, &t.valid_sampler, t.n, false, 2)?;
        best = t.run_phase(
            &mut params,
            PhaseSpec {
                scope: GradScope::FinalLayer,
                balanced: false,
                epochs: cfg.finetune_epochs,
            },
            &valid2,
        )?;
    }
    Ok(TrainOutcome {
        params,
        history: t.history,
        best_valid_loss: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_case, PhantomConfig};
    use crate::labels::LabelMap;
    use crate::model::ArchConfig;

    fn arch(classes: usize) -> ArchConfig {
        ArchConfig {
            modalities: 4,
            backend_maps1: 4,
            backend_maps2: 4,
            frontend_maps: 6,
            kernel: 3,
            classes,
        }
    }

    fn cases(n: usize, seed: u64) -> Vec<Case> {
        let cfg = PhantomConfig {
            height: 32,
            width: 32,
            difficulty: 0.3,
            ..PhantomConfig::default()
        };
        (0..n)
            .map(|i| generate_case(format!("c{i}"), &mut Rng::derive(seed, i as u64), &cfg).unwrap())
            .collect()
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            warmup_epochs: 1,
            max_epochs: 3,
            finetune_epochs: 2,
            patience: 5,
            patch_size: 11,
            batch_size: 8,
            batches_per_epoch: 3,
            valid_patches: 16,
            seed: 4,
            ..TrainConfig::default()
        }
    }

    fn init(classes: usize) -> HemisParams<f32> {
        HemisParams::init(arch(classes), &mut Rng::new(1)).unwrap()
    }

    #[test]
    fn zero_learning_rate_is_a_fixed_point() {
        let (tr, va) = (cases(3, 1), cases(2, 2));
        let mut cfg = quick();
        cfg.sgd.learning_rate = 0.0;
        let p = init(4);
        let out = train(p.clone(), &tr, &va, &cfg).unwrap();
        assert!(out.params.bitwise_eq(&p));
    }

    #[test]
    fn same_seed_same_run() {
        let (tr, va) = (cases(3, 1), cases(2, 2));
        let a = train(init(4), &tr, &va, &quick()).unwrap();
        let b = train(init(4), &tr, &va, &quick()).unwrap();
        assert!(a.params.bitwise_eq(&b.params));
        assert_eq!(history_tsv(&a.history), history_tsv(&b.history));
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn finetuning_touches_only_the_final_layer() {
        let (tr, va) = (cases(3, 1), cases(2, 2));
        let mut cfg = quick();
        cfg.finetune_epochs = 0;
        let phase1 = train(init(4), &tr, &va, &cfg).unwrap().params;
        cfg.finetune_epochs = 3;
        let both = train(init(4), &tr, &va, &cfg).unwrap().params;
        let keep = |p: &HemisParams<f32>| {
            let mut q = p.clone();
            q.c4 = phase1.c4.clone();
            q
        };
        assert!(keep(&both).bitwise_eq(&phase1));
    }

    #[test]
    fn warmup_and_baseline_masks_are_full() {
        let (tr, va) = (cases(3, 1), cases(2, 2));
        let out = train(init(4), &tr, &va, &quick()).unwrap();
        for r in out.history.iter().filter(|r| r.phase == Phase::Warmup) {
            assert!(r.masks.keys().all(|k| k == "1111"));
        }
        let baseline = TrainConfig {
            curriculum: false,
            ..quick()
        };
        let out = train(init(4), &tr, &va, &baseline).unwrap();
        assert!(out.history.iter().all(|r| r.masks.keys().all(|k| k == "1111")));
        assert!(out.history.iter().all(|r| r.phase != Phase::Dropping));
    }

    #[test]
    fn history_has_one_row_per_epoch() {
        let (tr, va) = (cases(3, 1), cases(2, 2));
        let out = train(init(4), &tr, &va, &quick()).unwrap();
        let tsv = history_tsv(&out.history);
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "epoch\tphase\ttrain_loss\tvalid_loss\tlr\tmask_histogram");
        assert_eq!(lines.len(), 1 + 1 + 3 + 2);
        assert!(lines[1].starts_with("0\twarmup\tNA\t"));
        let drawn: usize = out.history[1].masks.values().sum();
        assert_eq!(drawn, 3 * 8);
    }

    fn separable(n: usize, seed: u64) -> Vec<Case> {
        cases(n, seed)
            .into_iter()
            .map(|mut c| {
                let l: Vec<u8> = c.labels.as_slice().iter().map(|&v| (v > 0) as u8).collect();
                c.labels = LabelMap::new(32, 32, l).unwrap();
                c
            })
            .collect()
    }

    #[test]
    fn separable_problem_halves_validation_loss() {
        let (tr, va) = (separable(6, 5), separable(3, 6));
        let cfg = TrainConfig {
            sgd: SgdConfig {
                learning_rate: 0.01,
                ..SgdConfig::default()
            },
            warmup_epochs: 2,
            max_epochs: 15,
            finetune_epochs: 0,
            batches_per_epoch: 10,
            batch_size: 16,
            valid_patches: 64,
            ..quick()
        };
        let out = train(init(2), &tr, &va, &cfg).unwrap();
        let initial = out.history[0].valid_loss;
        assert!(out.best_valid_loss < 0.5 * initial, "{} vs {initial}", out.best_valid_loss);
        let min = out.history.iter().map(|r| r.valid_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(out.best_valid_loss, min);
        let restored = mean_loss(&out.params, &va, &validation_set(&cfg, &va, &PatchSampler::new(&va, 2).unwrap(), 4, true, 1).unwrap(), 11).unwrap();
        assert_eq!(restored, out.best_valid_loss);
    }

    #[test]
    fn bad_configs_rejected() {
        let bad = [
            TrainConfig { p_keep_all: 0.8, p_drop_one: 0.3, ..quick() },
            TrainConfig { warmup_epochs: 3, max_epochs: 3, ..quick() },
            TrainConfig { patch_size: 10, ..quick() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }
}
