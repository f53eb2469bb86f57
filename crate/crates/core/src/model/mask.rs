use std::fmt;

use crate::error::{Error, Result};

/// Largest modality count a mask can describe.
pub const MAX_MODALITIES: usize = 16;

/// Non-empty set of available modalities out of `n`.
///
/// Stored as a bitmask, bit `k` set when modality `k` is available, so two
/// masks built from the same indices in any order are identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModalityMask {
    n: u8,
    bits: u32,
}

impl ModalityMask {
    pub fn full(n: usize) -> Result<Self> {
        check_n(n)?;
        Ok(Self {
            n: n as u8,
            bits: (1u32 << n) - 1,
        })
    }

    pub fn from_bits(n: usize, bits: u32) -> Result<Self> {
        check_n(n)?;
        if bits >> n != 0 {
            return Err(Error::InvalidArgument(format!(
                "mask {bits:#b} has bits beyond {n} modalities"
            )));
        }
        if bits == 0 {
            return Err(Error::EmptyMask);
        }
        Ok(Self { n: n as u8, bits })
    }

    pub fn new(available: &[bool]) -> Result<Self> {
        let bits = available
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .fold(0u32, |acc, (k, _)| acc | (1 << k));
        Self::from_bits(available.len(), bits)
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut bits = 0u32;
        for &k in indices {
            if k >= n {
                return Err(Error::InvalidArgument(format!(
                    "modality index {k} out of range for {n} modalities"
                )));
            }
            bits |= 1 << k;
        }
        Self::from_bits(n, bits)
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn contains(&self, k: usize) -> bool {
        k < self.n() && self.bits & (1 << k) != 0
    }

    pub fn count(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn is_full(&self) -> bool {
        self.count() == self.n()
    }

    /// Available modality indices, ascending.
    pub fn indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&k| self.contains(k)).collect()
    }

    /// Absent modality indices, ascending.
    pub fn missing(&self) -> Vec<usize> {
        (0..self.n()).filter(|&k| !self.contains(k)).collect()
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.n()).map(|k| self.contains(k)).collect()
    }

    /// Every non-empty subset, ordered by bitmask.
    pub fn all_nonempty(n: usize) -> Result<Vec<Self>> {
        check_n(n)?;
        (1..(1u32 << n)).map(|bits| Self::from_bits(n, bits)).collect()
    }

    pub fn describe(&self, names: &[String]) -> String {
        self.indices()
            .into_iter()
            .map(|k| names.get(k).cloned().unwrap_or_else(|| k.to_string()))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Presence string in modality order, e.g. `1011`.
impl fmt::Display for ModalityMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in 0..self.n() {
            f.write_str(if self.contains(k) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 || n > MAX_MODALITIES {
        return Err(Error::InvalidArgument(format!(
            "modality count {n} outside 1..={MAX_MODALITIES}"
        )));
    }
    Ok(())
}
