//! 2×2 max-pooling with stride 1. Output keeps the input size; windows that
//! run past the bottom/right border read the replicated edge row/column.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    shape: Vec<usize>,
    /// Flat input index of each output's winning cell.
    argmax: Vec<u32>,
}

pub fn maxpool2d_s1_forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, MaxPoolCache)> {
    let (c, h, w) = x.dims3()?;
    let xs = x.as_slice();
    let mut out = Vec::with_capacity(xs.len());
    let mut argmax = Vec::with_capacity(xs.len());
    for ch in 0..c {
        let base = ch * h * w;
        for i in 0..h {
            let i2 = (i + 1).min(h - 1);
            for j in 0..w {
                let j2 = (j + 1).min(w - 1);
                // scan order: (i,j), (i,j+1), (i+1,j), (i+1,j+1); first max wins
                let cells = [i * w + j, i * w + j2, i2 * w + j, i2 * w + j2];
                let mut best = cells[0];
                for &cell in &cells[1..] {
                    if xs[base + cell] > xs[base + best] {
                        best = cell;
                    }
                }
                out.push(xs[base + best]);
                argmax.push((base + best) as u32);
            }
        }
    }
    Ok((
        Tensor::from_vec(&[c, h, w], out)?,
        MaxPoolCache {
            shape: vec![c, h, w],
            argmax,
        },
    ))
}

pub fn maxpool2d_s1_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    cache: &MaxPoolCache,
) -> Result<Tensor<T>> {
    if grad_out.shape() != cache.shape.as_slice() {
        return Err(Error::shape(&cache.shape, grad_out.shape()));
    }
    let mut grad = vec![T::zero(); grad_out.len()];
    for (&g, &idx) in grad_out.as_slice().iter().zip(&cache.argmax) {
        grad[idx as usize] += g;
    }
    Tensor::from_vec(&cache.shape, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn constant_input_is_fixed_point() {
        let x = Tensor::full(&[2, 3, 4], 1.5f32).unwrap();
        let (y, _) = maxpool2d_s1_forward(&x).unwrap();
        assert!(y.bitwise_eq(&x));
    }

    #[test]
    fn two_by_two_with_edge_replication() {
        let x = Tensor::from_vec(&[1, 2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        let (y, _) = maxpool2d_s1_forward(&x).unwrap();
        assert_eq!(y.as_slice(), &[4.0, 4.0, 4.0, 4.0]);
    }

    #[test]
    fn ties_route_to_first_cell() {
        let x = Tensor::full(&[1, 2, 2], 0.0f32).unwrap();
        let (y, cache) = maxpool2d_s1_forward(&x).unwrap();
        let g = maxpool2d_s1_backward(&y.ones_like(), &cache).unwrap();
        // every window's first cell is its anchor
        assert_eq!(g.as_slice(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn spatial_size_preserved() {
        let x = Tensor::<f32>::randn(&[3, 5, 7], &mut Rng::new(1), 1.0).unwrap();
        let (y, _) = maxpool2d_s1_forward(&x).unwrap();
        assert_eq!(y.shape(), x.shape());
    }

    #[test]
    fn gradient_mass_is_conserved() {
        let mut rng = Rng::new(2);
        let x = Tensor::<f64>::randn(&[2, 6, 6], &mut rng, 1.0).unwrap();
        let (y, cache) = maxpool2d_s1_forward(&x).unwrap();
        let g_out = Tensor::<f64>::randn(y.shape(), &mut rng, 1.0).unwrap();
        let g = maxpool2d_s1_backward(&g_out, &cache).unwrap();
        assert!((g.sum() - g_out.sum()).abs() < 1e-12);
    }
}
