//! Synthetic four-modality phantoms with a nested elliptical lesion.
//!
//! Each modality is a smooth random texture (a shared anatomy pattern plus a
//! modality-specific one) with per-class intensity offsets added inside the
//! lesion and Gaussian noise on top.
//!
//! | class         | F    | T1    | T1c   | T2   |
//! |---------------|------|-------|-------|------|
//! | 1 edema       | 2.0  | -0.6  | -0.2  | 1.3  |
//! | 2 core        | 1.5  | -0.9  | -0.5  | 1.5  |
//! | 3 enhancing   | 1.2  | -0.6  | 2.0   | 1.1  |

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelMap;
use crate::model::ModalityMask;
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const MODALITY_NAMES: [&str; 4] = ["F", "T1", "T1c", "T2"];
pub const NUM_MODALITIES: usize = 4;
pub const NUM_CLASSES: usize = 4;
pub const MIN_SIZE: usize = 32;
const MAX_ATTEMPTS: usize = 100;

/// Intensity offset per lesion class (rows 1..=3) and modality.
const CONTRAST: [[f64; NUM_MODALITIES]; 3] = [
    [2.0, -0.6, -0.2, 1.3],
    [1.5, -0.9, -0.5, 1.5],
    [1.2, -0.6, 2.0, 1.1],
];
const SHARED_GAIN: [f64; NUM_MODALITIES] = [0.5, 1.0, 0.8, 0.7];
const OWN_GAIN: f64 = 0.3;
const NOISE_PER_DIFFICULTY: f64 = 0.5;
/// Normalized core radius beyond which core pixels are enhancing.
const RIM: f64 = 0.65;

pub fn modality_names() -> Vec<String> {
    MODALITY_NAMES.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub height: usize,
    pub width: usize,
    /// Noise level; 0 gives noise-free images.
    pub difficulty: f64,
    /// Chance that a case contains a lesion at all.
    pub lesion_probability: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            difficulty: 1.0,
            lesion_probability: 1.0,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < MIN_SIZE || self.width < MIN_SIZE {
            return Err(Error::InvalidArgument(format!(
                "phantoms must be at least {MIN_SIZE}x{MIN_SIZE}, got {}x{}",
                self.height, self.width
            )));
        }
        if !(self.difficulty >= 0.0 && self.difficulty.is_finite()) {
            return Err(Error::InvalidArgument("difficulty must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.lesion_probability) {
            return Err(Error::InvalidArgument("lesion probability outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// One subject: an image per modality plus the ground-truth labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub id: String,
    /// `[1, H, W]` per modality, in [`MODALITY_NAMES`] order.
    pub images: Vec<Tensor<f32>>,
    pub labels: LabelMap,
    pub available: ModalityMask,
}

impl Case {
    pub fn height(&self) -> usize {
        self.labels.height()
    }

    pub fn width(&self) -> usize {
        self.labels.width()
    }

    pub fn image_slots(&self) -> Vec<Option<&Tensor<f32>>> {
        self.images.iter().map(Some).collect()
    }
}

fn smooth_pattern(rng: &mut Rng, h: usize, w: usize) -> Vec<f64> {
    let waves: Vec<[f64; 4]> = (0..3)
        .map(|_| {
            [
                rng.uniform_range(0.2, 0.5),
                rng.uniform_range(-2.5, 2.5),
                rng.uniform_range(-2.5, 2.5),
                rng.uniform_range(0.0, 2.0 * PI),
            ]
        })
        .collect();
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let (y, x) = (r as f64 / h as f64, c as f64 / w as f64);
            out[r * w + c] = waves
                .iter()
                .map(|&[a, fy, fx, ph]| a * (2.0 * PI * (fx * x + fy * y) + ph).sin())
                .sum();
        }
    }
    out
}

/// Noise-free, lesion-free image per modality. Consumes the first draws of
/// `rng` in [`generate_case`].
pub fn background(rng: &mut Rng, h: usize, w: usize) -> Vec<Vec<f64>> {
    let shared = smooth_pattern(rng, h, w);
    SHARED_GAIN
        .iter()
        .map(|&g| {
            let own = smooth_pattern(rng, h, w);
            shared.iter().zip(&own).map(|(s, o)| g * s + OWN_GAIN * o).collect()
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Ellipse {
    cy: f64,
    cx: f64,
    a: f64,
    b: f64,
    theta: f64,
}

impl Ellipse {
    /// Normalized radius; below 1 means inside.
    fn rho(&self, r: usize, c: usize) -> f64 {
        let (dy, dx) = (r as f64 - self.cy, c as f64 - self.cx);
        let (s, co) = self.theta.sin_cos();
        let u = dx * co + dy * s;
        let v = -dx * s + dy * co;
        ((u / self.a).powi(2) + (v / self.b).powi(2)).sqrt()
    }
}

fn lesion_labels(rng: &mut Rng, h: usize, w: usize) -> Result<Vec<u8>> {
    let scale = h.min(w) as f64;
    for _ in 0..MAX_ATTEMPTS {
        let outer = Ellipse {
            cy: rng.uniform_range(0.3, 0.7) * h as f64,
            cx: rng.uniform_range(0.3, 0.7) * w as f64,
            a: rng.uniform_range(0.12, 0.22) * scale,
            b: rng.uniform_range(0.12, 0.22) * scale,
            theta: rng.uniform_range(0.0, PI),
        };
        let shrink = rng.uniform_range(0.45, 0.65);
        let jitter = 0.2 * outer.a.min(outer.b);
        let inner = Ellipse {
            cy: outer.cy + rng.uniform_range(-jitter, jitter),
            cx: outer.cx + rng.uniform_range(-jitter, jitter),
            a: outer.a * shrink,
            b: outer.b * shrink,
            theta: outer.theta + rng.uniform_range(-0.3, 0.3),
        };
        let mut labels = vec![0u8; h * w];
        let mut counts = [0usize; NUM_CLASSES];
        let mut nested = true;
        for r in 0..h {
            for c in 0..w {
                let in_outer = outer.rho(r, c) < 1.0;
                let rho = inner.rho(r, c);
                let class = match (rho < 1.0, in_outer) {
                    (true, false) => {
                        nested = false;
                        0
                    }
                    (true, true) if rho >= RIM => 3,
                    (true, true) => 2,
                    (false, true) => 1,
                    (false, false) => 0,
                };
                labels[r * w + c] = class;
                counts[class as usize] += 1;
            }
        }
        if nested && counts[1..].iter().all(|&n| n > 0) {
            return Ok(labels);
        }
    }
    Err(Error::GeometryRetriesExhausted(MAX_ATTEMPTS))
}

/// Raw (unnormalized) phantom. Draw order: background, lesion, noise.
pub fn generate_case(id: impl Into<String>, rng: &mut Rng, cfg: &PhantomConfig) -> Result<Case> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let mut images = background(rng, h, w);
    let labels = if rng.uniform() < cfg.lesion_probability {
        lesion_labels(rng, h, w)?
    } else {
        vec![0; h * w]
    };
    let sigma = NOISE_PER_DIFFICULTY * cfg.difficulty;
    for (m, img) in images.iter_mut().enumerate() {
        for (v, &l) in img.iter_mut().zip(&labels) {
            if l > 0 {
                *v += CONTRAST[l as usize - 1][m];
            }
            if sigma > 0.0 {
                *v += rng.normal(0.0, sigma);
            }
        }
    }
    let images = images
        .into_iter()
        .map(|img| Tensor::from_vec(&[1, h, w], img.into_iter().map(|v| v as f32).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Case {
        id: id.into(),
        images,
        labels: LabelMap::new(h, w, labels)?,
        available: ModalityMask::full(NUM_MODALITIES)?,
    })
}
