//! Which modalities the network sees for a batch.
//!
//! During warmup every modality is shown. Afterwards, with probability
//! `p_keep_all` all are kept, with `p_drop_one` exactly one uniformly chosen
//! modality is dropped, and otherwise a uniform non-empty proper subset is
//! kept.

use crate::model::ModalityMask;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Warmup,
    Dropping,
    Finetune,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Warmup => "warmup",
            Phase::Dropping => "dropping",
            Phase::Finetune => "finetune",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curriculum {
    /// `false` shows the full mask throughout (the conventional baseline).
    pub enabled: bool,
    pub warmup_epochs: usize,
    pub p_keep_all: f64,
    pub p_drop_one: f64,
}

impl Curriculum {
    /// Phase-1 phase for a 0-based epoch.
    pub fn phase(&self, epoch: usize) -> Phase {
        if self.enabled && epoch >= self.warmup_epochs {
            Phase::Dropping
        } else {
            Phase::Warmup
        }
    }

    pub fn sample(&self, phase: Phase, n: usize, rng: &mut Rng) -> ModalityMask {
        let full = ModalityMask::full(n).expect("valid modality count");
        if !self.enabled || phase == Phase::Warmup {
            return full;
        }
        sample_dropping(n, self.p_keep_all, self.p_drop_one, rng)
    }
}

/// One draw from the dropping distribution. Always non-empty; for `n = 1`
/// the full mask is the only option.
pub fn sample_dropping(n: usize, p_keep_all: f64, p_drop_one: f64, rng: &mut Rng) -> ModalityMask {
    let all_bits = (1u32 << n) - 1;
    if n == 1 {
        return ModalityMask::from_bits(n, all_bits).expect("non-empty");
    }
    let u = rng.uniform();
    let bits = if u < p_keep_all {
        all_bits
    } else if u < p_keep_all + p_drop_one {
        all_bits & !(1 << rng.below(n))
    } else {
        // proper non-empty subsets are 1..all_bits
        rng.below(all_bits as usize - 1) as u32 + 1
    };
    ModalityMask::from_bits(n, bits).expect("non-empty")
}
