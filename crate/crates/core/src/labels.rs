//! Per-pixel class maps and binary region masks.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::LengthMismatch {
                shape: vec![height, width],
                expected: height * width,
                got: data.len(),
            });
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, class: u8) -> Self {
        Self {
            height,
            width,
            data: vec![class; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.width + c]
    }

    pub fn max_label(&self) -> u8 {
        self.data.iter().copied().max().unwrap_or(0)
    }

    pub fn check_classes(&self, classes: usize) -> Result<()> {
        match self.data.iter().find(|&&c| c as usize >= classes) {
            Some(&bad) => Err(Error::LabelOutOfRange {
                label: bad as usize,
                classes,
            }),
            None => Ok(()),
        }
    }

    /// `[H, W]` f32 tensor holding the class indices.
    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(
            &[self.height, self.width],
            self.data.iter().map(|&c| c as f32).collect(),
        )
        .expect("label shape")
    }

    pub fn from_tensor(t: &Tensor<f32>) -> Result<Self> {
        let (h, w) = match *t.shape() {
            [h, w] => (h, w),
            _ => {
                return Err(Error::Malformed(format!(
                    "label tensor must be [H, W], got {:?}",
                    t.shape()
                )))
            }
        };
        let data = t
            .as_slice()
            .iter()
            .map(|&v| {
                if v >= 0.0 && v <= 255.0 && v.fract() == 0.0 {
                    Ok(v as u8)
                } else {
                    Err(Error::Malformed(format!("label value {v} is not a class index")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(h, w, data)
    }

    /// Pixels whose class lies in `classes`.
    pub fn mask_of(&self, classes: impl Fn(u8) -> bool) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&c| classes(c)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::LengthMismatch {
                shape: vec![height, width],
                expected: height * width,
                got: data.len(),
            });
        }
        Ok(Self { height, width, data })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![false; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.width + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.data[r * self.width + c] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    pub fn to_tensor(&self) -> Tensor<f32> {
        Tensor::from_vec(
            &[self.height, self.width],
            self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask shape")
    }
}
