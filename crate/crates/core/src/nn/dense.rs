//! Fully connected layer over `[batch, in]` rows.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    /// `[out, in]`
    pub weight: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn new(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let out = match weight.shape() {
            &[o, _] => o,
            s => {
                return Err(Error::InvalidArgument(format!(
                    "dense weight must be [out, in], got {s:?}"
                )))
            }
        };
        if bias.shape() != [out] {
            return Err(Error::shape(&[out], bias.shape()));
        }
        Ok(Self { weight, bias })
    }

    pub fn init(inputs: usize, outputs: usize, rng: &mut Rng) -> Result<Self> {
        let weight = Tensor::randn(&[outputs, inputs], rng, (2.0 / inputs as f64).sqrt())?;
        Self::new(weight, Tensor::zeros(&[outputs])?)
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    fn rows(&self, x: &Tensor<T>) -> Result<usize> {
        match *x.shape() {
            [n] if n == self.inputs() => Ok(1),
            [b, n] if n == self.inputs() => Ok(b),
            _ => Err(Error::InvalidArgument(format!(
                "dense input {:?} does not match {} inputs",
                x.shape(),
                self.inputs()
            ))),
        }
    }

    /// `W·x + b` for each row; a rank-1 input yields a rank-1 output.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let rows = self.rows(x)?;
        let (n_in, n_out) = (self.inputs(), self.outputs());
        let w = self.weight.as_slice();
        let b = self.bias.as_slice();
        let mut out = Vec::with_capacity(rows * n_out);
        for row in x.as_slice().chunks_exact(n_in) {
            for o in 0..n_out {
                let wr = &w[o * n_in..(o + 1) * n_in];
                let mut acc = b[o];
                for (&a, &v) in wr.iter().zip(row) {
                    acc += a * v;
                }
                out.push(acc);
            }
        }
        let shape: Vec<usize> = if x.rank() == 1 { vec![n_out] } else { vec![rows, n_out] };
        Tensor::from_vec(&shape, out)
    }

    pub fn backward(&self, x: &Tensor<T>, grad_out: &Tensor<T>) -> Result<DenseGrads<T>> {
        let rows = self.rows(x)?;
        let (n_in, n_out) = (self.inputs(), self.outputs());
        if grad_out.len() != rows * n_out {
            return Err(Error::shape(&[rows, n_out], grad_out.shape()));
        }
        let w = self.weight.as_slice();
        let mut gw = vec![T::zero(); n_out * n_in];
        let mut gb = vec![T::zero(); n_out];
        let mut gx = vec![T::zero(); rows * n_in];
        for ((row, g), gxr) in x
            .as_slice()
            .chunks_exact(n_in)
            .zip(grad_out.as_slice().chunks_exact(n_out))
            .zip(gx.chunks_exact_mut(n_in))
        {
            for o in 0..n_out {
                let go = g[o];
                gb[o] += go;
                let gwr = &mut gw[o * n_in..(o + 1) * n_in];
                for (d, &v) in gwr.iter_mut().zip(row) {
                    *d += go * v;
                }
                let wr = &w[o * n_in..(o + 1) * n_in];
                for (d, &a) in gxr.iter_mut().zip(wr) {
                    *d += go * a;
                }
            }
        }
        Ok(DenseGrads {
            input: Tensor::from_vec(x.shape(), gx)?,
            weight: Tensor::from_vec(&[n_out, n_in], gw)?,
            bias: Tensor::from_vec(&[n_out], gb)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights() {
        let eye = Tensor::from_vec(&[2, 2], vec![1.0f32, 0.0, 0.0, 1.0]).unwrap();
        let layer = DenseLayer::new(eye, Tensor::zeros(&[2]).unwrap()).unwrap();
        let x = Tensor::from_vec(&[2], vec![3.0f32, -4.0]).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn hand_arithmetic() {
        let layer = DenseLayer::new(
            Tensor::from_vec(&[1, 2], vec![1.0f32, 2.0]).unwrap(),
            Tensor::from_vec(&[1], vec![1.0f32]).unwrap(),
        )
        .unwrap();
        let x = Tensor::from_vec(&[2], vec![3.0f32, 4.0]).unwrap();
        assert_eq!(layer.forward(&x).unwrap().as_slice(), &[12.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let layer = DenseLayer::<f32>::init(3, 2, &mut Rng::new(0)).unwrap();
        assert!(layer.forward(&Tensor::zeros(&[4]).unwrap()).is_err());
    }

    #[test]
    fn batched_rows_match_single_rows() {
        let mut rng = Rng::new(5);
        let layer = DenseLayer::<f64>::init(3, 4, &mut rng).unwrap();
        let x = Tensor::randn(&[5, 3], &mut rng, 1.0).unwrap();
        let y = layer.forward(&x).unwrap();
        for r in 0..5 {
            let xr = Tensor::from_vec(&[3], x.as_slice()[r * 3..r * 3 + 3].to_vec()).unwrap();
            let yr = layer.forward(&xr).unwrap();
            assert_eq!(yr.as_slice(), &y.as_slice()[r * 4..r * 4 + 4]);
        }
    }
}
