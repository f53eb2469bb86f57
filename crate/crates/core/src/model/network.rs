//! Forward and backward passes through back end, fusion and front end.

use crate::error::{Error, Result};
use crate::labels::LabelMap;
use crate::model::fusion::{fuse, fuse_backward, FusionMoments};
use crate::model::mask::ModalityMask;
use crate::model::params::{BackendParams, HemisParams};
use crate::nn::{
    cross_entropy_loss, maxpool2d_s1_backward, maxpool2d_s1_forward, pixel_softmax,
    relu_backward, relu_forward, ConvCache, MaxPoolCache,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Per-modality images indexed by modality, `None` where a modality is not
/// present. Every modality in the mask must have a `[1, H, W]` image.
pub type ModalityImages<'a, T> = [Option<&'a Tensor<T>>];

#[derive(Debug, Clone)]
struct BackendTape<T> {
    c1: ConvCache<T>,
    pre1: Tensor<T>,
    c2: ConvCache<T>,
    pre2: Tensor<T>,
    pool: MaxPoolCache,
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Debug, Clone)]
pub struct GradientTape<T> {
    mask: ModalityMask,
    backends: Vec<BackendTape<T>>,
    stacks: Vec<Tensor<T>>,
    moments: FusionMoments<T>,
    c3: ConvCache<T>,
    pre3: Tensor<T>,
    c4: ConvCache<T>,
    probs: Tensor<T>,
}

impl<T> GradientTape<T> {
    pub fn mask(&self) -> ModalityMask {
        self.mask
    }

    pub fn posteriors(&self) -> &Tensor<T> {
        &self.probs
    }

    pub fn moments(&self) -> &FusionMoments<T> {
        &self.moments
    }

    pub fn into_posteriors(self) -> Tensor<T> {
        self.probs
    }
}

/// Which parameters receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradScope {
    All,
    /// Only the classification layer; everything upstream is left at zero.
    FinalLayer,
}

fn backend_one<T: Scalar>(
    image: &Tensor<T>,
    b: &BackendParams<T>,
) -> Result<(Tensor<T>, BackendTape<T>)> {
    let (pre1, c1) = b.c1.forward(image)?;
    let a1 = relu_forward(&pre1);
    let (pre2, c2) = b.c2.forward(&a1)?;
    let a2 = relu_forward(&pre2);
    let (stack, pool) = maxpool2d_s1_forward(&a2)?;
    Ok((
        stack,
        BackendTape {
            c1,
            pre1,
            c2,
            pre2,
            pool,
        },
    ))
}

fn checked_inputs<'a, T: Scalar>(
    images: &ModalityImages<'a, T>,
    mask: ModalityMask,
    params: &HemisParams<T>,
) -> Result<Vec<(usize, &'a Tensor<T>)>> {
    if mask.n() != params.arch.modalities || images.len() != params.arch.modalities {
        return Err(Error::InvalidArgument(format!(
            "model has {} modalities, mask covers {} and {} image slots were given",
            params.arch.modalities,
            mask.n(),
            images.len()
        )));
    }
    let mut dims: Option<Vec<usize>> = None;
    let mut out = Vec::with_capacity(mask.count());
    for k in mask.indices() {
        let img = images[k].ok_or(Error::MissingModalityImage(k))?;
        let (c, _, _) = img.dims3()?;
        if c != 1 {
            return Err(Error::InvalidArgument(format!(
                "modality {k} image must have one channel, got {c}"
            )));
        }
        match &dims {
            Some(d) if d.as_slice() != img.shape() => return Err(Error::shape(d, img.shape())),
            Some(_) => {}
            None => dims = Some(img.shape().to_vec()),
        }
        out.push((k, img));
    }
    Ok(out)
}

/// Back-end stacks for the available modalities, ascending by modality index.
/// Absent modalities are not evaluated at all.
pub fn backend_forward<T: Scalar>(
    images: &ModalityImages<'_, T>,
    mask: ModalityMask,
    params: &HemisParams<T>,
) -> Result<Vec<(usize, Tensor<T>)>> {
    checked_inputs(images, mask, params)?
        .into_iter()
        .map(|(k, img)| Ok((k, backend_one(img, &params.backends[k])?.0)))
        .collect()
}

fn frontend_with_tape<T: Scalar>(
    moments: &FusionMoments<T>,
    params: &HemisParams<T>,
) -> Result<(Tensor<T>, ConvCache<T>, Tensor<T>, ConvCache<T>)> {
    let joined = Tensor::concat_channels(&[&moments.mean, &moments.var])?;
    let (pre3, c3) = params.c3.forward(&joined)?;
    let a3 = relu_forward(&pre3);
    let (logits, c4) = params.c4.forward(&a3)?;
    let probs = pixel_softmax(&logits)?;
    Ok((probs, c3, pre3, c4))
}

/// Per-pixel class posteriors `[L, H, W]` from the fused moments.
pub fn frontend_forward<T: Scalar>(
    moments: &FusionMoments<T>,
    params: &HemisParams<T>,
) -> Result<Tensor<T>> {
    Ok(frontend_with_tape(moments, params)?.0)
}

pub fn forward_with_tape<T: Scalar>(
    images: &ModalityImages<'_, T>,
    mask: ModalityMask,
    params: &HemisParams<T>,
) -> Result<GradientTape<T>> {
    let inputs = checked_inputs(images, mask, params)?;
    let mut backends = Vec::with_capacity(inputs.len());
    let mut stacks = Vec::with_capacity(inputs.len());
    for (k, img) in inputs {
        let (stack, tape) = backend_one(img, &params.backends[k])?;
        stacks.push(stack);
        backends.push(tape);
    }
    let refs: Vec<&Tensor<T>> = stacks.iter().collect();
    let moments = fuse(&refs)?;
    let (probs, c3, pre3, c4) = frontend_with_tape(&moments, params)?;
    Ok(GradientTape {
        mask,
        backends,
        stacks,
        moments,
        c3,
        pre3,
        c4,
        probs,
    })
}

/// Posterior class probabilities for the available modalities in `mask`.
pub fn model_forward<T: Scalar>(
    images: &ModalityImages<'_, T>,
    mask: ModalityMask,
    params: &HemisParams<T>,
) -> Result<Tensor<T>> {
    Ok(forward_with_tape(images, mask, params)?.into_posteriors())
}

/// Parameter gradients given the loss gradient with respect to the logits.
/// Back-end weights of modalities outside the tape's mask get zero gradient.
pub fn model_backward<T: Scalar>(
    tape: &GradientTape<T>,
    grad_logits: &Tensor<T>,
    params: &HemisParams<T>,
    scope: GradScope,
) -> Result<HemisParams<T>> {
    if grad_logits.shape() != tape.probs.shape() {
        return Err(Error::shape(tape.probs.shape(), grad_logits.shape()));
    }
    if tape.mask.n() != params.arch.modalities {
        return Err(Error::InvalidArgument(
            "tape was recorded with a different architecture".into(),
        ));
    }
    let mut grads = params.zeros_like();
    let full = scope == GradScope::All;
    let g4 = params.c4.backward(grad_logits, &tape.c4, full)?;
    grads.c4.kernels = g4.kernels;
    grads.c4.bias = g4.bias;
    if !full {
        return Ok(grads);
    }

    let g_a3 = g4.input.expect("input gradient requested");
    let g_pre3 = relu_backward(&tape.pre3, &g_a3)?;
    let g3 = params.c3.backward(&g_pre3, &tape.c3, true)?;
    grads.c3.kernels = g3.kernels;
    grads.c3.bias = g3.bias;

    let (g_mean, g_var) = g3
        .input
        .expect("input gradient requested")
        .split_channels(params.arch.backend_maps2)?;
    let refs: Vec<&Tensor<T>> = tape.stacks.iter().collect();
    let g_stacks = fuse_backward(&g_mean, &g_var, &refs, &tape.moments)?;

    for ((k, bt), g_stack) in tape.mask.indices().into_iter().zip(&tape.backends).zip(g_stacks) {
        let b = &params.backends[k];
        let g_a2 = maxpool2d_s1_backward(&g_stack, &bt.pool)?;
        let g_pre2 = relu_backward(&bt.pre2, &g_a2)?;
        let g2 = b.c2.backward(&g_pre2, &bt.c2, true)?;
        let g_a1 = g2.input.expect("input gradient requested");
        let g_pre1 = relu_backward(&bt.pre1, &g_a1)?;
        let g1 = b.c1.backward(&g_pre1, &bt.c1, false)?;
        let gb = &mut grads.backends[k];
        gb.c1.kernels = g1.kernels;
        gb.c1.bias = g1.bias;
        gb.c2.kernels = g2.kernels;
        gb.c2.bias = g2.bias;
    }
    Ok(grads)
}

/// Weighted pixelwise cross-entropy and its parameter gradients.
pub fn loss_and_grads<T: Scalar>(
    images: &ModalityImages<'_, T>,
    mask: ModalityMask,
    labels: &[u8],
    weights: &[T],
    params: &HemisParams<T>,
    scope: GradScope,
) -> Result<(T, HemisParams<T>)> {
    let tape = forward_with_tape(images, mask, params)?;
    let out = cross_entropy_loss(&tape.probs, labels, weights)?;
    let grads = model_backward(&tape, &out.grad_logits, params, scope)?;
    Ok((out.loss, grads))
}

/// Loss only, no gradients.
pub fn loss_only<T: Scalar>(
    images: &ModalityImages<'_, T>,
    mask: ModalityMask,
    labels: &[u8],
    weights: &[T],
    params: &HemisParams<T>,
) -> Result<T> {
    let probs = model_forward(images, mask, params)?;
    Ok(cross_entropy_loss(&probs, labels, weights)?.loss)
}

/// Most likely class per pixel; ties go to the lowest class index.
pub fn predict_segmentation<T: Scalar>(posteriors: &Tensor<T>) -> Result<LabelMap> {
    let (l, h, w) = posteriors.dims3()?;
    if l > u8::MAX as usize + 1 {
        return Err(Error::InvalidArgument(format!("{l} classes do not fit a label map")));
    }
    let plane = h * w;
    let p = posteriors.as_slice();
    let labels = (0..plane)
        .map(|px| {
            let mut best = 0;
            for c in 1..l {
                if p[c * plane + px] > p[best * plane + px] {
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    LabelMap::new(h, w, labels)
}
