//! Per-pixel softmax over class maps and the weighted cross-entropy loss.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Softmax across the channel axis of `[L, H, W]` logits, per pixel.
pub fn pixel_softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (l, h, w) = logits.dims3()?;
    if l < 2 {
        return Err(Error::InvalidArgument(format!(
            "softmax needs at least 2 classes, got {l}"
        )));
    }
    let plane = h * w;
    let z = logits.as_slice();
    let mut out = vec![T::zero(); z.len()];
    let mut exps = vec![T::zero(); l];
    for p in 0..plane {
        let mut max = z[p];
        for c in 1..l {
            max = max.max(z[c * plane + p]);
        }
        let mut total = T::zero();
        for (c, e) in exps.iter_mut().enumerate() {
            *e = (z[c * plane + p] - max).exp();
            total += *e;
        }
        for (c, &e) in exps.iter().enumerate() {
            out[c * plane + p] = e / total;
        }
    }
    Tensor::from_vec(logits.shape(), out)
}

#[derive(Debug, Clone)]
pub struct LossOutput<T> {
    pub loss: T,
    /// Gradient with respect to the logits that produced `probs`.
    pub grad_logits: Tensor<T>,
}

/// Weighted mean of `-ln p(true class)` over pixels.
///
/// `labels` and `weights` are flat `H*W` maps. The result is normalised by the
/// total weight, so the gradient is `(probs - onehot) * weight / total_weight`.
pub fn cross_entropy_loss<T: Scalar>(
    probs: &Tensor<T>,
    labels: &[u8],
    weights: &[T],
) -> Result<LossOutput<T>> {
    let (l, h, w) = probs.dims3()?;
    let plane = h * w;
    if labels.len() != plane || weights.len() != plane {
        return Err(Error::InvalidArgument(format!(
            "label/weight maps must have {plane} entries, got {}/{}",
            labels.len(),
            weights.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&c| c as usize >= l) {
        return Err(Error::LabelOutOfRange {
            label: bad as usize,
            classes: l,
        });
    }
    let total: T = weights.iter().copied().sum();
    if !(total > T::zero()) {
        return Err(Error::InvalidArgument("pixel weights sum to zero".into()));
    }
    let p = probs.as_slice();
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); p.len()];
    for px in 0..plane {
        let wt = weights[px];
        if wt == T::zero() {
            continue;
        }
        let y = labels[px] as usize;
        loss -= wt * p[y * plane + px].max(T::min_positive_value()).ln();
        let scale = wt / total;
        for c in 0..l {
            let target = if c == y { T::one() } else { T::zero() };
            grad[c * plane + px] = (p[c * plane + px] - target) * scale;
        }
    }
    Ok(LossOutput {
        loss: loss / total,
        grad_logits: Tensor::from_vec(probs.shape(), grad)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn equal_logits_give_half() {
        let z = Tensor::<f32>::zeros(&[2, 3, 3]).unwrap();
        let p = pixel_softmax(&z).unwrap();
        assert!(p.as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn large_logit_does_not_overflow() {
        let z = Tensor::from_vec(&[2, 1, 1], vec![1000.0f32, 0.0]).unwrap();
        let p = pixel_softmax(&z).unwrap();
        assert!((p.as_slice()[0] - 1.0).abs() < 1e-6);
        assert!(p.as_slice()[1] >= 0.0 && p.as_slice()[1] < 1e-6);
    }

    #[test]
    fn rows_sum_to_one() {
        let z = Tensor::<f32>::randn(&[5, 8, 8], &mut Rng::new(3), 10.0).unwrap();
        let p = pixel_softmax(&z).unwrap();
        for px in 0..64 {
            let s: f64 = (0..5).map(|c| p.as_slice()[c * 64 + px] as f64).sum();
            assert!((s - 1.0).abs() < 1e-6, "pixel {px} sums to {s}");
        }
    }

    #[test]
    fn single_class_rejected() {
        assert!(pixel_softmax(&Tensor::<f32>::zeros(&[1, 2, 2]).unwrap()).is_err());
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let probs = Tensor::from_vec(&[2, 1, 2], vec![1.0f64, 0.0, 0.0, 1.0]).unwrap();
        let out = cross_entropy_loss(&probs, &[0, 1], &[1.0, 1.0]).unwrap();
        assert!(out.loss.abs() < 1e-12);
    }

    #[test]
    fn uniform_prediction_costs_ln_l() {
        let probs = Tensor::full(&[4, 2, 2], 0.25f64).unwrap();
        let out = cross_entropy_loss(&probs, &[0, 1, 2, 3], &[1.0; 4]).unwrap();
        assert!((out.loss - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range() {
        let probs = Tensor::full(&[2, 1, 1], 0.5f32).unwrap();
        assert!(matches!(
            cross_entropy_loss(&probs, &[2], &[1.0]),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn zero_weight_pixels_are_ignored() {
        let probs = Tensor::from_vec(&[2, 1, 2], vec![0.9f64, 0.1, 0.1, 0.9]).unwrap();
        let out = cross_entropy_loss(&probs, &[0, 0], &[1.0, 0.0]).unwrap();
        assert!((out.loss + 0.9f64.ln()).abs() < 1e-12);
        assert_eq!(out.grad_logits.as_slice()[1], 0.0);
        assert_eq!(out.grad_logits.as_slice()[3], 0.0);
    }
}
