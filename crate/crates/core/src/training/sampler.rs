//! Patch sampling around labelled center pixels.

use crate::data::Case;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchCenter {
    pub case: usize,
    pub row: usize,
    pub col: usize,
    pub label: u8,
}

/// Index of every pixel by class, over a fixed list of cases.
#[derive(Debug, Clone)]
pub struct PatchSampler {
    by_class: Vec<Vec<(u32, u32)>>,
    dims: Vec<(usize, usize)>,
}

impl PatchSampler {
    pub fn new(cases: &[Case], classes: usize) -> Result<Self> {
        if cases.is_empty() {
            return Err(Error::InvalidArgument("no cases to sample from".into()));
        }
        let mut by_class = vec![Vec::new(); classes];
        for (i, case) in cases.iter().enumerate() {
            case.labels.check_classes(classes)?;
            for (px, &l) in case.labels.as_slice().iter().enumerate() {
                by_class[l as usize].push((i as u32, px as u32));
            }
        }
        Ok(Self {
            by_class,
            dims: cases.iter().map(|c| (c.height(), c.width())).collect(),
        })
    }

    pub fn class_count(&self, class: usize) -> usize {
        self.by_class[class].len()
    }

    fn center(&self, class: usize, (case, px): (u32, u32)) -> PatchCenter {
        let w = self.dims[case as usize].1;
        PatchCenter {
            case: case as usize,
            row: px as usize / w,
            col: px as usize % w,
            label: class as u8,
        }
    }

    /// Balanced: a class uniformly, then a pixel of that class uniformly.
    /// Every class must occur somewhere.
    pub fn balanced(&self, rng: &mut Rng) -> Result<PatchCenter> {
        if let Some(absent) = self.by_class.iter().position(|v| v.is_empty()) {
            return Err(Error::ClassAbsent(absent));
        }
        let class = rng.below(self.by_class.len());
        let list = &self.by_class[class];
        Ok(self.center(class, list[rng.below(list.len())]))
    }

    /// A case uniformly, then a pixel uniformly, so classes follow the
    /// label distribution.
    pub fn unbalanced(&self, rng: &mut Rng, cases: &[Case]) -> PatchCenter {
        let case = rng.below(self.dims.len());
        let (h, w) = self.dims[case];
        let (row, col) = (rng.below(h), rng.below(w));
        PatchCenter {
            case,
            row,
            col,
            label: cases[case].labels.get(row, col),
        }
    }

    pub fn sample(&self, rng: &mut Rng, cases: &[Case], balanced: bool) -> Result<PatchCenter> {
        if balanced {
            self.balanced(rng)
        } else {
            Ok(self.unbalanced(rng, cases))
        }
    }

    pub fn batch(
        &self,
        rng: &mut Rng,
        cases: &[Case],
        batch_size: usize,
        balanced: bool,
    ) -> Result<Vec<PatchCenter>> {
        (0..batch_size).map(|_| self.sample(rng, cases, balanced)).collect()
    }
}

/// `size × size` window of a `[1, H, W]` image centered on `(row, col)`;
/// pixels outside the image are zero.
pub fn extract_patch(img: &Tensor<f32>, row: usize, col: usize, size: usize) -> Result<Tensor<f32>> {
    let (_, h, w) = img.dims3()?;
    let half = (size / 2) as isize;
    let src = img.as_slice();
    let mut out = vec![0.0f32; size * size];
    for pr in 0..size {
        let r = row as isize + pr as isize - half;
        if r < 0 || r >= h as isize {
            continue;
        }
        for pc in 0..size {
            let c = col as isize + pc as isize - half;
            if c >= 0 && c < w as isize {
                out[pr * size + pc] = src[r as usize * w + c as usize];
            }
        }
    }
    Tensor::from_vec(&[1, size, size], out)
}
