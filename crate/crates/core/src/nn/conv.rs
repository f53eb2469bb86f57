//! Same-size 2D convolution: odd square kernels, stride 1, zero padding of
//! `(k - 1) / 2` on every side.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<T> {
    /// `[out_maps, in_maps, k, k]`
    pub kernels: Tensor<T>,
    /// `[out_maps]`
    pub bias: Tensor<T>,
}

/// Forward-pass state needed by [`ConvLayer::backward`].
#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    padded: Tensor<T>,
    height: usize,
    width: usize,
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    /// `None` when the input gradient was not requested.
    pub input: Option<Tensor<T>>,
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> ConvLayer<T> {
    pub fn new(kernels: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let (out_maps, k) = match kernels.shape() {
            &[o, _, k1, k2] if k1 == k2 => (o, k1),
            s => {
                return Err(Error::InvalidArgument(format!(
                    "kernels must be [out, in, k, k], got {s:?}"
                )))
            }
        };
        if k % 2 == 0 {
            return Err(Error::InvalidArgument(format!("kernel size {k} must be odd")));
        }
        if bias.shape() != [out_maps] {
            return Err(Error::shape(&[out_maps], bias.shape()));
        }
        Ok(Self { kernels, bias })
    }

    /// He-normal kernels (`stddev = sqrt(2 / fan_in)`) and zero bias.
    pub fn init(in_maps: usize, out_maps: usize, k: usize, rng: &mut Rng) -> Result<Self> {
        let fan_in = (in_maps * k * k) as f64;
        let kernels = Tensor::randn(&[out_maps, in_maps, k, k], rng, (2.0 / fan_in).sqrt())?;
        Self::new(kernels, Tensor::zeros(&[out_maps])?)
    }

    pub fn out_maps(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn in_maps(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn kernel_size(&self) -> usize {
        self.kernels.shape()[2]
    }

    fn pad(&self) -> usize {
        (self.kernel_size() - 1) / 2
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
        let (c_in, h, w) = x.dims3()?;
        if c_in != self.in_maps() {
            return Err(Error::InvalidArgument(format!(
                "input has {c_in} channels, layer expects {}",
                self.in_maps()
            )));
        }
        let padded = zero_pad(x, self.pad());
        let out = self.correlate(&padded, h, w);
        Ok((out, ConvCache { padded, height: h, width: w }))
    }

    fn correlate(&self, padded: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
        let k = self.kernel_size();
        let (c_in, c_out) = (self.in_maps(), self.out_maps());
        let pw = w + k - 1;
        let ph = h + k - 1;
        let xp = padded.as_slice();
        let kern = self.kernels.as_slice();
        let mut out = vec![T::zero(); c_out * h * w];
        for (o, plane) in out.chunks_exact_mut(h * w).enumerate() {
            plane.fill(self.bias.as_slice()[o]);
            for c in 0..c_in {
                let src = &xp[c * ph * pw..(c + 1) * ph * pw];
                let kc = &kern[(o * c_in + c) * k * k..(o * c_in + c + 1) * k * k];
                for u in 0..k {
                    for v in 0..k {
                        let wt = kc[u * k + v];
                        for i in 0..h {
                            let row = &src[(i + u) * pw + v..(i + u) * pw + v + w];
                            let dst = &mut plane[i * w..(i + 1) * w];
                            for (d, &s) in dst.iter_mut().zip(row) {
                                *d += wt * s;
                            }
                        }
                    }
                }
            }
        }
        Tensor::from_vec(&[c_out, h, w], out).expect("conv output shape")
    }

    pub fn backward(
        &self,
        grad_out: &Tensor<T>,
        cache: &ConvCache<T>,
        need_input_grad: bool,
    ) -> Result<ConvGrads<T>> {
        let (h, w) = (cache.height, cache.width);
        let (c_in, c_out, k) = (self.in_maps(), self.out_maps(), self.kernel_size());
        if grad_out.shape() != [c_out, h, w] {
            return Err(Error::shape(&[c_out, h, w], grad_out.shape()));
        }
        let pw = w + k - 1;
        let ph = h + k - 1;
        let xp = cache.padded.as_slice();
        let g = grad_out.as_slice();
        let kern = self.kernels.as_slice();

        let grad_bias: Vec<T> = g.chunks_exact(h * w).map(|p| p.iter().copied().sum()).collect();

        let mut grad_k = vec![T::zero(); kern.len()];
        let mut grad_xp = if need_input_grad {
            vec![T::zero(); xp.len()]
        } else {
            Vec::new()
        };
        for o in 0..c_out {
            let go = &g[o * h * w..(o + 1) * h * w];
            for c in 0..c_in {
                let base = (o * c_in + c) * k * k;
                let src = &xp[c * ph * pw..(c + 1) * ph * pw];
                for u in 0..k {
                    for v in 0..k {
                        let mut acc = T::zero();
                        for i in 0..h {
                            let row = &src[(i + u) * pw + v..(i + u) * pw + v + w];
                            let gr = &go[i * w..(i + 1) * w];
                            for (&a, &b) in gr.iter().zip(row) {
                                acc += a * b;
                            }
                        }
                        grad_k[base + u * k + v] = acc;
                    }
                }
                if need_input_grad {
                    let dst = &mut grad_xp[c * ph * pw..(c + 1) * ph * pw];
                    for u in 0..k {
                        for v in 0..k {
                            let wt = kern[base + u * k + v];
                            for i in 0..h {
                                let row = &mut dst[(i + u) * pw + v..(i + u) * pw + v + w];
                                let gr = &go[i * w..(i + 1) * w];
                                for (d, &s) in row.iter_mut().zip(gr) {
                                    *d += wt * s;
                                }
                            }
                        }
                    }
                }
            }
        }

        let input = if need_input_grad {
            let p = self.pad();
            let mut gx = Vec::with_capacity(c_in * h * w);
            for c in 0..c_in {
                for i in 0..h {
                    let start = c * ph * pw + (i + p) * pw + p;
                    gx.extend_from_slice(&grad_xp[start..start + w]);
                }
            }
            Some(Tensor::from_vec(&[c_in, h, w], gx)?)
        } else {
            None
        };
        Ok(ConvGrads {
            input,
            kernels: Tensor::from_vec(self.kernels.shape(), grad_k)?,
            bias: Tensor::from_vec(&[c_out], grad_bias)?,
        })
    }
}

fn zero_pad<T: Scalar>(x: &Tensor<T>, p: usize) -> Tensor<T> {
    let (c, h, w) = x.dims3().expect("rank-3 input");
    let (ph, pw) = (h + 2 * p, w + 2 * p);
    let mut out = vec![T::zero(); c * ph * pw];
    let src = x.as_slice();
    for ch in 0..c {
        for i in 0..h {
            let dst = ch * ph * pw + (i + p) * pw + p;
            let s = ch * h * w + i * w;
            out[dst..dst + w].copy_from_slice(&src[s..s + w]);
        }
    }
    Tensor::from_vec(&[c, ph, pw], out).expect("padded shape")
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Direct six-loop evaluation of the padded cross-correlation.
    pub(crate) fn conv_oracle<T: Scalar>(x: &Tensor<T>, layer: &ConvLayer<T>) -> Tensor<T> {
        let (c_in, h, w) = x.dims3().unwrap();
        let (c_out, k) = (layer.out_maps(), layer.kernel_size());
        let p = (k - 1) as isize / 2;
        let xs = x.as_slice();
        let ks = layer.kernels.as_slice();
        let mut out = vec![T::zero(); c_out * h * w];
        for o in 0..c_out {
            for i in 0..h {
                for j in 0..w {
                    let mut acc = layer.bias.as_slice()[o];
                    for c in 0..c_in {
                        for u in 0..k {
                            for v in 0..k {
                                let r = i as isize + u as isize - p;
                                let s = j as isize + v as isize - p;
                                if r < 0 || s < 0 || r >= h as isize || s >= w as isize {
                                    continue;
                                }
                                acc += ks[((o * c_in + c) * k + u) * k + v]
                                    * xs[(c * h + r as usize) * w + s as usize];
                            }
                        }
                    }
                    out[(o * h + i) * w + j] = acc;
                }
            }
        }
        Tensor::from_vec(&[c_out, h, w], out).unwrap()
    }

    fn random_layer<T: Scalar>(c_in: usize, c_out: usize, k: usize, rng: &mut Rng) -> ConvLayer<T> {
        ConvLayer::new(
            Tensor::randn(&[c_out, c_in, k, k], rng, 0.5).unwrap(),
            Tensor::randn(&[c_out], rng, 0.5).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identity_kernel() {
        let x = Tensor::from_vec(&[1, 3, 3], (1..=9).map(|v| v as f32).collect()).unwrap();
        let layer = ConvLayer::new(
            Tensor::ones(&[1, 1, 1, 1]).unwrap(),
            Tensor::zeros(&[1]).unwrap(),
        )
        .unwrap();
        let (y, _) = layer.forward(&x).unwrap();
        assert!(y.bitwise_eq(&x));
    }

    #[test]
    fn all_ones_padded_sum() {
        let x = Tensor::<f32>::ones(&[1, 3, 3]).unwrap();
        let layer = ConvLayer::new(
            Tensor::ones(&[1, 1, 3, 3]).unwrap(),
            Tensor::zeros(&[1]).unwrap(),
        )
        .unwrap();
        let (y, _) = layer.forward(&x).unwrap();
        assert_eq!(y.as_slice(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn matches_oracle_on_random_input() {
        let mut rng = Rng::new(11);
        let x = Tensor::<f32>::randn(&[2, 16, 16], &mut rng, 1.0).unwrap();
        let layer = random_layer::<f32>(2, 3, 5, &mut rng);
        let (y, _) = layer.forward(&x).unwrap();
        let diff = y.max_abs_diff(&conv_oracle(&x, &layer)).unwrap();
        assert!(diff < 1e-6, "max abs diff {diff}");
    }

    #[test]
    fn matches_oracle_f64() {
        let mut rng = Rng::new(12);
        let x = Tensor::<f64>::randn(&[3, 9, 7], &mut rng, 1.0).unwrap();
        let layer = random_layer::<f64>(3, 2, 3, &mut rng);
        let (y, _) = layer.forward(&x).unwrap();
        assert!(y.max_abs_diff(&conv_oracle(&x, &layer)).unwrap() < 1e-12);
    }

    #[test]
    fn channel_mismatch() {
        let layer = random_layer::<f32>(2, 1, 3, &mut Rng::new(1));
        let x = Tensor::<f32>::zeros(&[3, 4, 4]).unwrap();
        assert!(layer.forward(&x).is_err());
    }

    #[test]
    fn even_kernel_rejected() {
        let r = ConvLayer::<f32>::new(
            Tensor::zeros(&[1, 1, 2, 2]).unwrap(),
            Tensor::zeros(&[1]).unwrap(),
        );
        assert!(r.is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let mut rng = Rng::new(2);
        let layer = random_layer::<f64>(2, 3, 3, &mut rng);
        let x = Tensor::randn(&[2, 5, 5], &mut rng, 1.0).unwrap();
        let (y, cache) = layer.forward(&x).unwrap();
        let g = layer.backward(&y.zeros_like(), &cache, true).unwrap();
        assert!(g.input.unwrap().as_slice().iter().all(|&v| v == 0.0));
        assert!(g.kernels.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.bias.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_passes_gradient_through() {
        let mut rng = Rng::new(3);
        let layer = ConvLayer::new(
            Tensor::<f64>::ones(&[1, 1, 1, 1]).unwrap(),
            Tensor::zeros(&[1]).unwrap(),
        )
        .unwrap();
        let x = Tensor::randn(&[1, 4, 4], &mut rng, 1.0).unwrap();
        let (_, cache) = layer.forward(&x).unwrap();
        let g_out = Tensor::randn(&[1, 4, 4], &mut rng, 1.0).unwrap();
        let g = layer.backward(&g_out, &cache, true).unwrap();
        assert!(g.input.unwrap().bitwise_eq(&g_out));
    }

    #[test]
    fn backward_rejects_wrong_grad_shape() {
        let mut rng = Rng::new(4);
        let layer = random_layer::<f64>(1, 2, 3, &mut rng);
        let (_, cache) = layer.forward(&Tensor::zeros(&[1, 4, 4]).unwrap()).unwrap();
        assert!(layer
            .backward(&Tensor::zeros(&[2, 3, 4]).unwrap(), &cache, true)
            .is_err());
    }
}
