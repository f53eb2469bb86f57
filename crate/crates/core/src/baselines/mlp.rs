//! Per-pixel regressors that predict a missing modality from the available
//! ones: one `in → 100 → 100 → 1` ReLU network per (target, available set).
//!
//! Bundle layout (little-endian):
//!
//! ```text
//! "IMP1" | u32 model count | u32 modality count | records...
//! record = u32 target | u32 available bits | u8 window | 6 HTF blobs
//!          (w1, b1, w2, b2, w3, b3)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Case;
use crate::error::{Error, Result};
use crate::htf::{self, ByteReader};
use crate::model::ModalityMask;
use crate::nn::{relu_backward, relu_forward, DenseLayer, SgdConfig, SgdState};
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"IMP1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub hidden: usize,
    /// Side of the square neighborhood fed per available modality; 1 uses
    /// the co-located pixel only.
    pub window: usize,
    /// Training pixels drawn per model.
    pub samples: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub sgd: SgdConfig,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 100,
            window: 1,
            samples: 20_000,
            epochs: 8,
            batch_size: 64,
            sgd: SgdConfig {
                learning_rate: 0.01,
                ..SgdConfig::default()
            },
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window % 2 == 0 || self.window > 255 {
            return Err(Error::InvalidArgument("MLP window must be odd and below 256".into()));
        }
        if self.hidden == 0 || self.samples == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "hidden, samples and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationMlp {
    pub target: usize,
    pub available: ModalityMask,
    pub window: usize,
    pub layers: [DenseLayer<f32>; 3],
}

impl ImputationMlp {
    pub fn init(
        target: usize,
        available: ModalityMask,
        window: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if available.contains(target) {
            return Err(Error::InvalidArgument(format!(
                "target {target} is among the inputs {available}"
            )));
        }
        let inputs = available.count() * window * window;
        Ok(Self {
            target,
            available,
            window,
            layers: [
                DenseLayer::init(inputs, hidden, rng)?,
                DenseLayer::init(hidden, hidden, rng)?,
                DenseLayer::init(hidden, 1, rng)?,
            ],
        })
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    /// Predictions for `[rows, inputs]`, as `[rows, 1]`.
    pub fn forward(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let h1 = relu_forward(&self.layers[0].forward(x)?);
        let h2 = relu_forward(&self.layers[1].forward(&h1)?);
        self.layers[2].forward(&h2)
    }

    /// Mean squared error of one batch and the step it implies.
    fn train_step(&mut self, x: &Tensor<f32>, y: &[f32], opt: &mut SgdState<f32>) -> Result<f64> {
        let z1 = self.layers[0].forward(x)?;
        let h1 = relu_forward(&z1);
        let z2 = self.layers[1].forward(&h1)?;
        let h2 = relu_forward(&z2);
        let out = self.layers[2].forward(&h2)?;
        let n = y.len() as f32;
        let mut mse = 0.0;
        let grad: Vec<f32> = out
            .as_slice()
            .iter()
            .zip(y)
            .map(|(&p, &t)| {
                mse += ((p - t) as f64).powi(2);
                2.0 * (p - t) / n
            })
            .collect();
        let g3 = self.layers[2].backward(&h2, &Tensor::from_vec(out.shape(), grad)?)?;
        let g2 = self.layers[1].backward(&h1, &relu_backward(&z2, &g3.input)?)?;
        let g1 = self.layers[0].backward(x, &relu_backward(&z1, &g2.input)?)?;
        let [a, b, c] = &mut self.layers;
        opt.step(
            &mut [
                &mut a.weight,
                &mut a.bias,
                &mut b.weight,
                &mut b.bias,
                &mut c.weight,
                &mut c.bias,
            ],
            &[&g1.weight, &g1.bias, &g2.weight, &g2.bias, &g3.weight, &g3.bias],
        )?;
        Ok(mse / y.len() as f64)
    }

    /// Feature row for pixel `(r, c)`: the window around it in each input
    /// modality, zero outside the image.
    fn features_at(&self, case: &Case, r: usize, c: usize, out: &mut Vec<f32>) {
        let (h, w) = (case.height(), case.width());
        let half = (self.window / 2) as isize;
        for k in self.available.indices() {
            let img = case.images[k].as_slice();
            for dr in -half..=half {
                for dc in -half..=half {
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    let inside = rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w;
                    out.push(if inside { img[rr as usize * w + cc as usize] } else { 0.0 });
                }
            }
        }
    }

    /// Predicted `[1, H, W]` image of the target modality.
    pub fn predict_image(&self, case: &Case) -> Result<Tensor<f32>> {
        let (h, w) = (case.height(), case.width());
        let mut x = Vec::with_capacity(h * w * self.inputs());
        for r in 0..h {
            for c in 0..w {
                self.features_at(case, r, c, &mut x);
            }
        }
        let pred = self.forward(&Tensor::from_vec(&[h * w, self.inputs()], x)?)?;
        pred.reshape(&[1, h, w])
    }

    /// Mean squared error over every pixel of `cases`.
    pub fn mse(&self, cases: &[Case]) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0usize;
        for case in cases {
            let pred = self.predict_image(case)?;
            for (&p, &t) in pred.as_slice().iter().zip(case.images[self.target].as_slice()) {
                total += ((p - t) as f64).powi(2);
                count += 1;
            }
        }
        Ok(total / count as f64)
    }
}

/// Every `(target, available set)` pair with the target absent, in
/// (available bits, target) order.
pub fn imputation_keys(n: usize) -> Result<Vec<(usize, ModalityMask)>> {
    let mut keys = Vec::new();
    for mask in ModalityMask::all_nonempty(n)? {
        if mask.is_full() {
            continue;
        }
        for target in mask.missing() {
            keys.push((target, mask));
        }
    }
    Ok(keys)
}

fn train_one(
    target: usize,
    available: ModalityMask,
    cases: &[Case],
    cfg: &MlpConfig,
    rng: &mut Rng,
) -> Result<ImputationMlp> {
    let mut model = ImputationMlp::init(target, available, cfg.window, cfg.hidden, rng)?;
    let d = model.inputs();
    let mut x = Vec::with_capacity(cfg.samples * d);
    let mut y = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let case = &cases[rng.below(cases.len())];
        let (r, c) = (rng.below(case.height()), rng.below(case.width()));
        model.features_at(case, r, c, &mut x);
        y.push(case.images[target].as_slice()[r * case.width() + c]);
    }
    let mut order: Vec<usize> = (0..cfg.samples).collect();
    let mut opt = SgdState::new(cfg.sgd);
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let bx: Vec<f32> = chunk.iter().flat_map(|&i| x[i * d..(i + 1) * d].iter().copied()).collect();
            let by: Vec<f32> = chunk.iter().map(|&i| y[i]).collect();
            loss += model.train_step(&Tensor::from_vec(&[chunk.len(), d], bx)?, &by, &mut opt)?;
            batches += 1;
        }
        let loss = loss / batches as f64;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: batches });
        }
        log::debug!("imputation {target}|{available} epoch {epoch} mse {loss:.5}");
    }
    Ok(model)
}

/// The imputation models, keyed by (target, available bits).
#[derive(Debug, Clone, PartialEq)]
pub struct ImputationBundle {
    pub modalities: usize,
    pub models: BTreeMap<(usize, u32), ImputationMlp>,
}

impl ImputationBundle {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn get(&self, target: usize, available: ModalityMask) -> Result<&ImputationMlp> {
        self.models
            .get(&(target, available.bits()))
            .ok_or(Error::MissingImputationModel {
                target,
                available: available.bits(),
            })
    }
}

/// Train one model per missing-modality configuration, in parallel.
pub fn train_imputation_mlps(cases: &[Case], cfg: &MlpConfig) -> Result<ImputationBundle> {
    cfg.validate()?;
    let n = cases
        .first()
        .ok_or_else(|| Error::InvalidArgument("no cases to train imputation on".into()))?
        .images
        .len();
    let keys = imputation_keys(n)?;
    let models: Vec<ImputationMlp> = keys
        .par_iter()
        .enumerate()
        .map(|(i, &(t, m))| train_one(t, m, cases, cfg, &mut Rng::derive(cfg.seed, i as u64)))
        .collect::<Result<_>>()?;
    Ok(ImputationBundle {
        modalities: n,
        models: models
            .into_iter()
            .map(|m| ((m.target, m.available.bits()), m))
            .collect(),
    })
}

/// Fill every modality absent from `mask` with its predicted image.
pub fn mlp_impute(case: &Case, mask: ModalityMask, bundle: &ImputationBundle) -> Result<Case> {
    super::check_mask(case, mask)?;
    let mut out = case.clone();
    for target in mask.missing() {
        out.images[target] = bundle.get(target, mask)?.predict_image(case)?;
    }
    Ok(out)
}

pub fn encode_bundle(bundle: &ImputationBundle) -> Vec<u8> {
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&(bundle.models.len() as u32).to_le_bytes());
    out.extend_from_slice(&(bundle.modalities as u32).to_le_bytes());
    for m in bundle.models.values() {
        out.extend_from_slice(&(m.target as u32).to_le_bytes());
        out.extend_from_slice(&m.available.bits().to_le_bytes());
        out.push(m.window as u8);
        for l in &m.layers {
            out.extend_from_slice(&htf::encode(&l.weight));
            out.extend_from_slice(&htf::encode(&l.bias));
        }
    }
    out
}

pub fn decode_bundle(bytes: &[u8]) -> Result<ImputationBundle> {
    let mut r = ByteReader::new(bytes);
    r.magic(MAGIC)?;
    let count = r.u32("model count")? as usize;
    let n = r.u32("modality count")? as usize;
    let mut models = BTreeMap::new();
    for _ in 0..count {
        let target = r.u32("target")? as usize;
        let available = ModalityMask::from_bits(n, r.u32("available set")?)?;
        let window = r.u8("window")? as usize;
        let mut layer = || -> Result<DenseLayer<f32>> {
            let w = htf::read_tensor(&mut r)?;
            let b = htf::read_tensor(&mut r)?;
            DenseLayer::new(w, b)
        };
        let layers = [layer()?, layer()?, layer()?];
        if target >= n || available.contains(target) {
            return Err(Error::Malformed(format!("bad imputation key {target}|{available}")));
        }
        if layers[0].inputs() != available.count() * window * window
            || layers[1].inputs() != layers[0].outputs()
            || layers[2].inputs() != layers[1].outputs()
            || layers[2].outputs() != 1
        {
            return Err(Error::Malformed(format!("inconsistent layers for {target}|{available}")));
        }
        let m = ImputationMlp {
            target,
            available,
            window,
            layers,
        };
        if models.insert((target, available.bits()), m).is_some() {
            return Err(Error::Malformed(format!("duplicate model {target}|{available}")));
        }
    }
    if !r.is_at_end() {
        return Err(Error::Malformed("trailing bytes after last model".into()));
    }
    Ok(ImputationBundle { modalities: n, models })
}

pub fn save_bundle(bundle: &ImputationBundle, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_bundle(bundle))?;
    Ok(())
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<ImputationBundle> {
    decode_bundle(&fs::read(path)?)
}
