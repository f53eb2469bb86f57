use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let data = x.as_slice().iter().map(|&v| v.max(T::zero())).collect();
    Tensor::from_vec(x.shape(), data).expect("same shape")
}

/// Gradient flows where the forward input was strictly positive.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != grad_out.shape() {
        return Err(Error::shape(x.shape(), grad_out.shape()));
    }
    let data = x
        .as_slice()
        .iter()
        .zip(grad_out.as_slice())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_definition() {
        let x = Tensor::from_vec(&[3], vec![-1.0f32, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).as_slice(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn backward_definition() {
        let x = Tensor::from_vec(&[2], vec![-1.0f32, 2.0]).unwrap();
        let g = Tensor::from_vec(&[2], vec![5.0f32, 5.0]).unwrap();
        assert_eq!(relu_backward(&x, &g).unwrap().as_slice(), &[0.0, 5.0]);
    }

    #[test]
    fn tie_at_zero_passes_nothing() {
        let x = Tensor::from_vec(&[1], vec![0.0f32]).unwrap();
        let g = Tensor::from_vec(&[1], vec![3.0f32]).unwrap();
        assert_eq!(relu_backward(&x, &g).unwrap().as_slice(), &[0.0]);
    }
}
