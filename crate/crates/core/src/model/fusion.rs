//! Abstraction layer: per-feature-map mean and variance across the available
//! modalities' back-end outputs.
//!
//! For `K` available stacks `x_1..x_K` (summed in ascending modality order):
//!
//! ```text
//! mean = (1/K) Σ x_k
//! var  = (1/(K-1)) Σ (x_k - mean)²     (K ≥ 2)
//! var  = 0                             (K = 1)
//! ```

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct FusionMoments<T> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

fn check_stacks<T: Scalar>(stacks: &[&Tensor<T>]) -> Result<()> {
    let first = stacks
        .first()
        .ok_or_else(|| Error::InvalidArgument("fusion needs at least one stack".into()))?;
    for s in &stacks[1..] {
        if s.shape() != first.shape() {
            return Err(Error::shape(first.shape(), s.shape()));
        }
    }
    Ok(())
}

/// Moments of stacks given in ascending modality order.
pub fn fuse<T: Scalar>(stacks: &[&Tensor<T>]) -> Result<FusionMoments<T>> {
    check_stacks(stacks)?;
    let shape = stacks[0].shape();
    let len = stacks[0].len();
    let k = T::from_usize(stacks.len()).expect("stack count");

    let mut mean = vec![T::zero(); len];
    for s in stacks {
        for (m, &v) in mean.iter_mut().zip(s.as_slice()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= k;
    }

    let mut var = vec![T::zero(); len];
    if stacks.len() > 1 {
        for s in stacks {
            for ((acc, &v), &m) in var.iter_mut().zip(s.as_slice()).zip(&mean) {
                let d = v - m;
                *acc += d * d;
            }
        }
        let denom = k - T::one();
        for v in &mut var {
            *v /= denom;
        }
    }
    Ok(FusionMoments {
        mean: Tensor::from_vec(shape, mean)?,
        var: Tensor::from_vec(shape, var)?,
    })
}

/// Same as [`fuse`] but accepts `(modality index, stack)` pairs in any order.
pub fn fuse_indexed<T: Scalar>(stacks: &[(usize, &Tensor<T>)]) -> Result<FusionMoments<T>> {
    let mut sorted = stacks.to_vec();
    sorted.sort_by_key(|(k, _)| *k);
    if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidArgument("duplicate modality index".into()));
    }
    let ordered: Vec<&Tensor<T>> = sorted.into_iter().map(|(_, s)| s).collect();
    fuse(&ordered)
}

/// Gradient of the loss with respect to each stack:
/// `g_k = grad_mean / K + grad_var * 2 (x_k - mean) / (K - 1)`, with the
/// variance term absent when `K = 1`.
pub fn fuse_backward<T: Scalar>(
    grad_mean: &Tensor<T>,
    grad_var: &Tensor<T>,
    stacks: &[&Tensor<T>],
    moments: &FusionMoments<T>,
) -> Result<Vec<Tensor<T>>> {
    check_stacks(stacks)?;
    let shape = stacks[0].shape();
    for t in [grad_mean, grad_var, &moments.mean, &moments.var] {
        if t.shape() != shape {
            return Err(Error::shape(shape, t.shape()));
        }
    }
    let n = stacks.len();
    let k = T::from_usize(n).expect("stack count");
    let gm = grad_mean.as_slice();
    if n == 1 {
        return Ok(vec![grad_mean.clone()]);
    }
    let two_over = T::from_f64_lossy(2.0) / (k - T::one());
    let gv = grad_var.as_slice();
    let mean = moments.mean.as_slice();
    stacks
        .iter()
        .map(|s| {
            let data = s
                .as_slice()
                .iter()
                .zip(mean)
                .zip(gm.iter().zip(gv))
                .map(|((&x, &m), (&g_m, &g_v))| g_m / k + g_v * two_over * (x - m))
                .collect();
            Tensor::from_vec(shape, data)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn single_stack_has_zero_variance() {
        let s = Tensor::<f32>::randn(&[3, 4, 4], &mut Rng::new(1), 2.0).unwrap();
        let m = fuse(&[&s]).unwrap();
        assert!(m.mean.bitwise_eq(&s));
        assert!(m.var.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_constant_stacks() {
        let a = Tensor::full(&[1, 2, 2], 1.0f32).unwrap();
        let b = Tensor::full(&[1, 2, 2], 3.0f32).unwrap();
        let m = fuse(&[&a, &b]).unwrap();
        assert!(m.mean.as_slice().iter().all(|&v| v == 2.0));
        assert!(m.var.as_slice().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        assert!(fuse::<f32>(&[]).is_err());
        let a = Tensor::<f32>::zeros(&[1, 2, 2]).unwrap();
        let b = Tensor::<f32>::zeros(&[1, 2, 3]).unwrap();
        assert!(fuse(&[&a, &b]).is_err());
    }

    #[test]
    fn indexed_presentation_order_is_irrelevant() {
        let mut rng = Rng::new(5);
        let a = Tensor::<f32>::randn(&[2, 3, 3], &mut rng, 1.0).unwrap();
        let b = Tensor::<f32>::randn(&[2, 3, 3], &mut rng, 1.0).unwrap();
        let c = Tensor::<f32>::randn(&[2, 3, 3], &mut rng, 1.0).unwrap();
        let x = fuse_indexed(&[(0, &a), (2, &c), (1, &b)]).unwrap();
        let y = fuse_indexed(&[(2, &c), (1, &b), (0, &a)]).unwrap();
        assert!(x.mean.bitwise_eq(&y.mean) && x.var.bitwise_eq(&y.var));
        assert!(fuse_indexed(&[(1, &a), (1, &b)]).is_err());
    }

    #[test]
    fn mean_only_gradient_splits_evenly() {
        let mut rng = Rng::new(6);
        let stacks: Vec<Tensor<f64>> = (0..3)
            .map(|_| Tensor::randn(&[1, 2, 2], &mut rng, 1.0).unwrap())
            .collect();
        let refs: Vec<&Tensor<f64>> = stacks.iter().collect();
        let m = fuse(&refs).unwrap();
        let gm = Tensor::randn(&[1, 2, 2], &mut rng, 1.0).unwrap();
        let grads = fuse_backward(&gm, &gm.zeros_like(), &refs, &m).unwrap();
        for g in grads {
            for (a, b) in g.as_slice().iter().zip(gm.as_slice()) {
                assert!((a - b / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_stack_gradient_is_grad_mean() {
        let mut rng = Rng::new(7);
        let s = Tensor::<f64>::randn(&[2, 2, 2], &mut rng, 1.0).unwrap();
        let m = fuse(&[&s]).unwrap();
        let gm = Tensor::randn(&[2, 2, 2], &mut rng, 1.0).unwrap();
        let gv = Tensor::randn(&[2, 2, 2], &mut rng, 1.0).unwrap();
        let grads = fuse_backward(&gm, &gv, &[&s], &m).unwrap();
        assert!(grads[0].bitwise_eq(&gm));
    }
}
