//! Binary PPM (P6) overlays: the prediction on the left, the ground truth on
//! the right, both over the same grayscale image.
//!
//! Gray levels are the image min-max scaled to 0..=255 (all 0 for a
//! constant image). A labelled pixel is the channel-wise mean of its gray
//! level and the class color, rounded down.
//!
//! | class | color           |
//! |-------|-----------------|
//! | 1     | (0, 200, 0)     |
//! | 2     | (255, 220, 0)   |
//! | 3     | (255, 128, 0)   |
//! | other | (255, 0, 255)   |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::labels::LabelMap;
use crate::tensor::Tensor;

pub fn class_color(class: u8) -> [u8; 3] {
    match class {
        1 => [0, 200, 0],
        2 => [255, 220, 0],
        3 => [255, 128, 0],
        _ => [255, 0, 255],
    }
}

fn grayscale(values: &[f32]) -> Vec<u8> {
    let lo = values.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    if !(hi > lo) {
        return vec![0; values.len()];
    }
    let span = (hi - lo) as f64;
    values
        .iter()
        .map(|&v| (255.0 * (v - lo) as f64 / span).round() as u8)
        .collect()
}

pub fn overlay_ppm(image: &Tensor<f32>, pred: &LabelMap, truth: &LabelMap) -> Result<Vec<u8>> {
    let (h, w) = match *image.shape() {
        [1, h, w] | [h, w] => (h, w),
        _ => return Err(Error::InvalidArgument(format!("overlay image {:?}", image.shape()))),
    };
    for l in [pred, truth] {
        if (l.height(), l.width()) != (h, w) {
            return Err(Error::shape(&[h, w], &[l.height(), l.width()]));
        }
    }
    let gray = grayscale(image.as_slice());
    let mut out = format!("P6\n{} {}\n255\n", 2 * w, h).into_bytes();
    for r in 0..h {
        for labels in [pred, truth] {
            for c in 0..w {
                let g = gray[r * w + c];
                match labels.get(r, c) {
                    0 => out.extend_from_slice(&[g, g, g]),
                    l => out.extend(class_color(l).iter().map(|&k| ((g as u16 + k as u16) / 2) as u8)),
                }
            }
        }
    }
    Ok(out)
}

pub fn render_overlay(image: &Tensor<f32>, pred: &LabelMap, truth: &LabelMap, path: &Path) -> Result<()> {
    fs::write(path, overlay_ppm(image, pred, truth)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_two_by_two() {
        let img = Tensor::from_vec(&[1, 2, 2], vec![0.0f32, 1.0, 2.0, 4.0]).unwrap();
        let pred = LabelMap::new(2, 2, vec![0, 1, 2, 3]).unwrap();
        let truth = LabelMap::filled(2, 2, 0);
        let bytes = overlay_ppm(&img, &pred, &truth).unwrap();
        let header = b"P6\n4 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        // gray: 0, 64 (63.75), 128 (127.5), 255
        let expect: Vec<u8> = [
            [0, 0, 0], [32, 132, 32], [0, 0, 0], [64, 64, 64],
            [191, 174, 64], [255, 191, 127], [128, 128, 128], [255, 255, 255],
        ]
        .concat();
        assert_eq!(&bytes[header.len()..], expect.as_slice());
    }

    #[test]
    fn empty_segmentation_is_pure_grayscale() {
        let img = Tensor::from_vec(&[3, 3], (0..9).map(|v| v as f32).collect()).unwrap();
        let none = LabelMap::filled(3, 3, 0);
        let bytes = overlay_ppm(&img, &none, &none).unwrap();
        let body = &bytes[b"P6\n6 3\n255\n".len()..];
        assert!(body.chunks(3).all(|p| p[0] == p[1] && p[1] == p[2]));
        assert_eq!(bytes, overlay_ppm(&img, &none, &none).unwrap());
    }

    #[test]
    fn constant_image_is_black() {
        let img = Tensor::full(&[2, 2], 5.0f32).unwrap();
        let none = LabelMap::filled(2, 2, 0);
        let bytes = overlay_ppm(&img, &none, &none).unwrap();
        assert!(bytes[b"P6\n4 2\n255\n".len()..].iter().all(|&b| b == 0));
    }

    #[test]
    fn size_mismatch() {
        let img = Tensor::full(&[2, 2], 5.0f32).unwrap();
        assert!(overlay_ppm(&img, &LabelMap::filled(2, 3, 0), &LabelMap::filled(2, 2, 0)).is_err());
    }
}
