//! Dense row-major tensor.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn validate_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::EmptyShape);
    }
    if let Some(index) = shape.iter().position(|&d| d == 0) {
        return Err(Error::ZeroDim {
            index,
            shape: shape.to_vec(),
        });
    }
    Ok(shape.iter().product())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Result<Self> {
        Self::full(shape, T::one())
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        let len = validate_shape(shape)?;
        if !value.is_finite() {
            return Err(Error::NonFinite("fill value".into()));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let len = validate_shape(shape)?;
        if len != data.len() {
            return Err(Error::LengthMismatch {
                shape: shape.to_vec(),
                expected: len,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor data".into()));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Gaussian fill, `Normal(0, stddev²)`.
    pub fn randn(shape: &[usize], rng: &mut Rng, stddev: f64) -> Result<Self> {
        if !(stddev > 0.0) || !stddev.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "stddev must be positive, got {stddev}"
            )));
        }
        let len = validate_shape(shape)?;
        let data = (0..len)
            .map(|_| T::from_f64_lossy(stddev * rng.standard_normal()))
            .collect();
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: vec![T::zero(); self.data.len()],
        }
    }

    pub fn ones_like(&self) -> Self {
        Self {
            shape: self.shape.clone(),
            data: vec![T::one(); self.data.len()],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Raw mutable access. Callers are responsible for keeping values finite.
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let len = validate_shape(shape)?;
        if len != self.data.len() {
            return Err(Error::LengthMismatch {
                shape: shape.to_vec(),
                expected: len,
                got: self.data.len(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
        }
    }

    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    pub fn elementwise(&self, op: BinaryOp, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(&self.shape, &other.shape));
        }
        let data: Vec<T> = match op {
            BinaryOp::Add => self.zip_map(other, |a, b| a + b),
            BinaryOp::Sub => self.zip_map(other, |a, b| a - b),
            BinaryOp::Mul => self.zip_map(other, |a, b| a * b),
        };
        let out = Self {
            shape: self.shape.clone(),
            data,
        };
        out.check_finite("elementwise result")?;
        Ok(out)
    }

    fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Vec<T> {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.elementwise(BinaryOp::Add, other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.elementwise(BinaryOp::Sub, other)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.elementwise(BinaryOp::Mul, other)
    }

    pub fn scale(&self, factor: T) -> Result<Self> {
        let out = Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| v * factor).collect(),
        };
        out.check_finite("scaled tensor")?;
        Ok(out)
    }

    /// In-place `self += other`; shapes must agree.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(&self.shape, &other.shape));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        if self.shape != other.shape {
            return Err(Error::shape(&self.shape, &other.shape));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max))
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0`.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_f64_lossy().to_bits() == b.to_f64_lossy().to_bits())
    }

    /// Dimensions `[C, H, W]` of a rank-3 tensor.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::InvalidArgument(format!(
                "expected a [C,H,W] tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// Channel `c` of a `[C, H, W]` tensor as a flat `H*W` slice.
    pub fn channel(&self, c: usize) -> &[T] {
        let plane = self.shape[1] * self.shape[2];
        &self.data[c * plane..(c + 1) * plane]
    }

    /// Concatenate `[C_i, H, W]` tensors along the channel axis.
    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
        let (_, h, w) = first.dims3()?;
        let mut channels = 0;
        let mut data = Vec::new();
        for p in parts {
            let (c, ph, pw) = p.dims3()?;
            if (ph, pw) != (h, w) {
                return Err(Error::shape(&[c, h, w], p.shape()));
            }
            channels += c;
            data.extend_from_slice(&p.data);
        }
        Self::from_vec(&[channels, h, w], data)
    }

    /// Split a `[C, H, W]` tensor into leading `first` channels and the rest.
    pub fn split_channels(&self, first: usize) -> Result<(Self, Self)> {
        let (c, h, w) = self.dims3()?;
        if first == 0 || first >= c {
            return Err(Error::InvalidArgument(format!(
                "cannot split {c} channels at {first}"
            )));
        }
        let at = first * h * w;
        Ok((
            Self {
                shape: vec![first, h, w],
                data: self.data[..at].to_vec(),
            },
            Self {
                shape: vec![c - first, h, w],
                data: self.data[at..].to_vec(),
            },
        ))
    }
}
