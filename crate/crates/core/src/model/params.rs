//! Learnable weights of the network and its architecture hyper-parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ConvLayer, ParamSet};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchConfig {
    pub modalities: usize,
    /// Feature maps of each modality's first convolution.
    pub backend_maps1: usize,
    /// Feature maps of each modality's second convolution; the fusion layer
    /// produces this many mean maps and as many variance maps.
    pub backend_maps2: usize,
    /// Feature maps of the front-end hidden convolution.
    pub frontend_maps: usize,
    pub kernel: usize,
    pub classes: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            modalities: 4,
            backend_maps1: 48,
            backend_maps2: 48,
            frontend_maps: 16,
            kernel: 5,
            classes: 4,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.modalities == 0 || self.modalities > crate::model::MAX_MODALITIES {
            return bad("modality count out of range");
        }
        if self.backend_maps1 == 0 || self.backend_maps2 == 0 || self.frontend_maps == 0 {
            return bad("feature map counts must be positive");
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return bad("kernel size must be odd");
        }
        if self.classes < 2 {
            return bad("at least two classes are required");
        }
        Ok(())
    }

    /// Pixels above/left and below/right of an output pixel that influence it.
    pub fn receptive_extent(&self) -> (usize, usize) {
        let r = (self.kernel - 1) / 2;
        // four convolutions plus the pooling window reaching one cell down/right
        (4 * r, 4 * r + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendParams<T> {
    pub c1: ConvLayer<T>,
    pub c2: ConvLayer<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HemisParams<T> {
    pub arch: ArchConfig,
    /// One convolutional pipeline per modality, in modality order.
    pub backends: Vec<BackendParams<T>>,
    /// Front-end hidden layer over the concatenated mean and variance maps.
    pub c3: ConvLayer<T>,
    /// Classification layer, one output map per class.
    pub c4: ConvLayer<T>,
}

impl<T: Scalar> HemisParams<T> {
    pub fn init(arch: ArchConfig, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        let k = arch.kernel;
        let backends = (0..arch.modalities)
            .map(|_| {
                Ok(BackendParams {
                    c1: ConvLayer::init(1, arch.backend_maps1, k, rng)?,
                    c2: ConvLayer::init(arch.backend_maps1, arch.backend_maps2, k, rng)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let c3 = ConvLayer::init(2 * arch.backend_maps2, arch.frontend_maps, k, rng)?;
        let c4 = ConvLayer::init(arch.frontend_maps, arch.classes, k, rng)?;
        Ok(Self {
            arch,
            backends,
            c3,
            c4,
        })
    }

    /// Same layout with every tensor zeroed; doubles as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let z = |l: &ConvLayer<T>| ConvLayer {
            kernels: l.kernels.zeros_like(),
            bias: l.bias.zeros_like(),
        };
        Self {
            arch: self.arch,
            backends: self
                .backends
                .iter()
                .map(|b| BackendParams { c1: z(&b.c1), c2: z(&b.c2) })
                .collect(),
            c3: z(&self.c3),
            c4: z(&self.c4),
        }
    }

    pub fn cast<U: Scalar>(&self) -> HemisParams<U> {
        let c = |l: &ConvLayer<T>| ConvLayer {
            kernels: l.kernels.cast(),
            bias: l.bias.cast(),
        };
        HemisParams {
            arch: self.arch,
            backends: self
                .backends
                .iter()
                .map(|b| BackendParams { c1: c(&b.c1), c2: c(&b.c2) })
                .collect(),
            c3: c(&self.c3),
            c4: c(&self.c4),
        }
    }

    /// Check that every tensor matches the shapes implied by `arch`.
    pub fn validate(&self) -> Result<()> {
        let a = &self.arch;
        a.validate()?;
        let k = a.kernel;
        let expect = |l: &ConvLayer<T>, out: usize, inp: usize| -> Result<()> {
            let want = [out, inp, k, k];
            if l.kernels.shape() != want {
                return Err(Error::shape(&want, l.kernels.shape()));
            }
            if l.bias.shape() != [out] {
                return Err(Error::shape(&[out], l.bias.shape()));
            }
            Ok(())
        };
        if self.backends.len() != a.modalities {
            return Err(Error::InvalidArgument(format!(
                "{} back-end pipelines for {} modalities",
                self.backends.len(),
                a.modalities
            )));
        }
        for b in &self.backends {
            expect(&b.c1, a.backend_maps1, 1)?;
            expect(&b.c2, a.backend_maps2, a.backend_maps1)?;
        }
        expect(&self.c3, a.frontend_maps, 2 * a.backend_maps2)?;
        expect(&self.c4, a.classes, a.frontend_maps)
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.named_tensors_mut().into_iter().map(|(_, t)| t).collect()
    }

    /// The classification layer's kernels and bias.
    pub fn final_layer_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.c4.kernels, &mut self.c4.bias]
    }

    pub fn final_layer(&self) -> Vec<&Tensor<T>> {
        vec![&self.c4.kernels, &self.c4.bias]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale_in_place(&mut self, factor: T) {
        for t in self.tensors_mut() {
            for v in t.as_mut_slice() {
                *v *= factor;
            }
        }
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.arch == other.arch
            && self
                .tensors()
                .iter()
                .zip(other.tensors())
                .all(|(a, b)| a.bitwise_eq(b))
    }
}

fn conv_entries<'a, T>(prefix: &str, l: &'a ConvLayer<T>, out: &mut Vec<(String, &'a Tensor<T>)>) {
    out.push((format!("{prefix}.kernels"), &l.kernels));
    out.push((format!("{prefix}.bias"), &l.bias));
}

impl<T> ParamSet<T> for HemisParams<T> {
    /// Names: `backend{k}.c1.kernels`, ..., `c3.bias`, `c4.kernels`, `c4.bias`.
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (k, b) in self.backends.iter().enumerate() {
            conv_entries(&format!("backend{k}.c1"), &b.c1, &mut out);
            conv_entries(&format!("backend{k}.c2"), &b.c2, &mut out);
        }
        conv_entries("c3", &self.c3, &mut out);
        conv_entries("c4", &self.c4, &mut out);
        out
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (k, b) in self.backends.iter_mut().enumerate() {
            out.push((format!("backend{k}.c1.kernels"), &mut b.c1.kernels));
            out.push((format!("backend{k}.c1.bias"), &mut b.c1.bias));
            out.push((format!("backend{k}.c2.kernels"), &mut b.c2.kernels));
            out.push((format!("backend{k}.c2.bias"), &mut b.c2.bias));
        }
        out.push(("c3.kernels".into(), &mut self.c3.kernels));
        out.push(("c3.bias".into(), &mut self.c3.bias));
        out.push(("c4.kernels".into(), &mut self.c4.kernels));
        out.push(("c4.bias".into(), &mut self.c4.bias));
        out
    }
}
