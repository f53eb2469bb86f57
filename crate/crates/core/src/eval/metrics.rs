//! Overlap and lesion-wise detection metrics, all in percent.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::labels::BinaryMask;

fn same_dims(a: &BinaryMask, b: &BinaryMask) -> Result<()> {
    if a.dims() != b.dims() {
        let (ah, aw) = a.dims();
        let (bh, bw) = b.dims();
        return Err(Error::shape(&[ah, aw], &[bh, bw]));
    }
    Ok(())
}

/// `100 · 2|P ∩ T| / (|P| + |T|)`; two empty masks agree perfectly (100).
pub fn dice(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64> {
    same_dims(pred, truth)?;
    let (p, t) = (pred.count(), truth.count());
    if p + t == 0 {
        return Ok(100.0);
    }
    let both = pred
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .filter(|(&a, &b)| a && b)
        .count();
    Ok(100.0 * 2.0 * both as f64 / (p + t) as f64)
}

/// 4-connected component id per pixel (0 for background, then 1, 2, ... in
/// scan order of each component's first pixel) and the component count.
pub fn components(mask: &BinaryMask) -> (Vec<u32>, u32) {
    let (h, w) = mask.dims();
    let on = mask.as_slice();
    let mut ids = vec![0u32; h * w];
    let mut next = 0;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !on[start] || ids[start] != 0 {
            continue;
        }
        next += 1;
        ids[start] = next;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (r, c) = (i / w, i % w);
            let mut visit = |j: usize| {
                if on[j] && ids[j] == 0 {
                    ids[j] = next;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                visit(i - w);
            }
            if r + 1 < h {
                visit(i + w);
            }
            if c > 0 {
                visit(i - 1);
            }
            if c + 1 < w {
                visit(i + 1);
            }
        }
    }
    (ids, next)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LesionMetrics {
    /// Absolute volume difference relative to the true volume.
    pub vd: f64,
    /// Share of true components touched by the prediction.
    pub tpr: f64,
    /// Share of predicted components touching no true component.
    pub fpr: f64,
}

/// Components whose pixels overlap `other` anywhere.
fn overlapping(ids: &[u32], count: u32, other: &BinaryMask) -> usize {
    let mut hit = vec![false; count as usize + 1];
    for (&id, &o) in ids.iter().zip(other.as_slice()) {
        if id > 0 && o {
            hit[id as usize] = true;
        }
    }
    hit.iter().filter(|&&h| h).count()
}

pub fn vd_tpr_fpr(pred: &BinaryMask, truth: &BinaryMask) -> Result<LesionMetrics> {
    same_dims(pred, truth)?;
    let t = truth.count();
    if t == 0 {
        return Err(Error::Eval("volume difference is undefined for an empty truth".into()));
    }
    let vd = 100.0 * (pred.count() as f64 - t as f64).abs() / t as f64;
    let (truth_ids, n_truth) = components(truth);
    let (pred_ids, n_pred) = components(pred);
    let tpr = 100.0 * overlapping(&truth_ids, n_truth, pred) as f64 / n_truth as f64;
    let fpr = if n_pred == 0 {
        0.0
    } else {
        100.0 * (n_pred as usize - overlapping(&pred_ids, n_pred, truth)) as f64 / n_pred as f64
    };
    Ok(LesionMetrics { vd, tpr, fpr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{any, prop_assert_eq, proptest};

    fn mask(h: usize, w: usize, on: &[(usize, usize)]) -> BinaryMask {
        let mut m = BinaryMask::empty(h, w);
        for &(r, c) in on {
            m.set(r, c, true);
        }
        m
    }

    fn row_mask(w: usize, range: std::ops::Range<usize>) -> BinaryMask {
        let on: Vec<(usize, usize)> = range.map(|c| (0, c)).collect();
        mask(1, w, &on)
    }

    #[test]
    fn dice_cases() {
        let a = mask(4, 4, &[(0, 0), (1, 1)]);
        assert_eq!(dice(&a, &a).unwrap(), 100.0);
        let b = mask(4, 4, &[(2, 2)]);
        assert_eq!(dice(&a, &b).unwrap(), 0.0);
        // |P| = |T| = 100 with 50 shared
        let p = row_mask(150, 0..100);
        let t = row_mask(150, 50..150);
        assert_eq!(dice(&p, &t).unwrap(), 50.0);
        let e = BinaryMask::empty(4, 4);
        assert_eq!(dice(&e, &e).unwrap(), 100.0);
        assert!(dice(&a, &BinaryMask::empty(3, 4)).is_err());
    }

    #[test]
    fn identical_prediction() {
        let t = mask(5, 5, &[(0, 0), (3, 3), (3, 4)]);
        let m = vd_tpr_fpr(&t, &t).unwrap();
        assert_eq!((m.vd, m.tpr, m.fpr), (0.0, 100.0, 0.0));
    }

    #[test]
    fn empty_prediction() {
        let t = mask(5, 5, &[(1, 1)]);
        let m = vd_tpr_fpr(&BinaryMask::empty(5, 5), &t).unwrap();
        assert_eq!((m.vd, m.tpr, m.fpr), (100.0, 0.0, 0.0));
        assert!(vd_tpr_fpr(&t, &BinaryMask::empty(5, 5)).is_err());
    }

    #[test]
    fn one_hit_one_miss_one_spurious() {
        // truth blobs at the top-left and bottom-right, prediction hits the
        // first and adds a blob at the top-right
        let t = mask(6, 6, &[(0, 0), (0, 1), (5, 5), (4, 5)]);
        let p = mask(6, 6, &[(0, 1), (1, 1), (0, 5)]);
        let m = vd_tpr_fpr(&p, &t).unwrap();
        assert_eq!(m.tpr, 50.0);
        assert_eq!(m.fpr, 50.0);
        assert_eq!(m.vd, 25.0);
    }

    #[test]
    fn diagonal_pixels_are_separate_components() {
        let (_, n) = components(&mask(3, 3, &[(0, 0), (1, 1), (2, 2)]));
        assert_eq!(n, 3);
        let (ids, n) = components(&mask(3, 3, &[(0, 0), (0, 1), (1, 1)]));
        assert_eq!(n, 1);
        assert_eq!(ids[0], 1);
    }

    proptest! {
        #[test]
        fn dice_is_symmetric(a in any::<[bool; 36]>(), b in any::<[bool; 36]>()) {
            let ma = BinaryMask::new(6, 6, a.to_vec()).unwrap();
            let mb = BinaryMask::new(6, 6, b.to_vec()).unwrap();
            prop_assert_eq!(dice(&ma, &mb).unwrap(), dice(&mb, &ma).unwrap());
            if ma.count() > 0 {
                prop_assert_eq!(dice(&ma, &ma).unwrap(), 100.0);
            }
        }
    }
}
