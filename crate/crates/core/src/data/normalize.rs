//! Intensity standardization: clip to the 0.001/0.999 quantiles, then zero
//! mean and unit variance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const LOWER_QUANTILE: f64 = 0.001;
pub const UPPER_QUANTILE: f64 = 0.999;

/// Statistics used to standardize one image (or one modality of a dataset).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityStats {
    pub clip_low: f64,
    pub clip_high: f64,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationScope {
    /// Each image gets its own statistics.
    #[default]
    PerCase,
    /// One set of statistics per modality, estimated on the training split.
    Dataset,
}

/// Linear-interpolation quantile of sorted values (the "type 7" definition).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Clip bounds, mean and population standard deviation of `values`.
pub fn estimate_stats(values: &[f64]) -> Result<IntensityStats> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("no values to normalize".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let clip_low = quantile_sorted(&sorted, LOWER_QUANTILE);
    let clip_high = quantile_sorted(&sorted, UPPER_QUANTILE);
    let n = values.len() as f64;
    let mean = values.iter().map(|v| v.clamp(clip_low, clip_high)).sum::<f64>() / n;
    let var = values
        .iter()
        .map(|v| (v.clamp(clip_low, clip_high) - mean).powi(2))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    if !(std > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok(IntensityStats {
        clip_low,
        clip_high,
        mean,
        std,
    })
}

pub fn apply_stats(img: &Tensor<f32>, s: &IntensityStats) -> Result<Tensor<f32>> {
    let data = img
        .as_slice()
        .iter()
        .map(|&v| ((v as f64).clamp(s.clip_low, s.clip_high) - s.mean) / s.std)
        .map(|v| v as f32)
        .collect();
    Tensor::from_vec(img.shape(), data)
}

/// Standardize one image with its own statistics.
pub fn normalize_image(img: &Tensor<f32>) -> Result<(Tensor<f32>, IntensityStats)> {
    let values: Vec<f64> = img.as_slice().iter().map(|&v| v as f64).collect();
    let stats = estimate_stats(&values)?;
    Ok((apply_stats(img, &stats)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn moments(t: &Tensor<f32>) -> (f64, f64) {
        let n = t.len() as f64;
        let m = t.as_slice().iter().map(|&v| v as f64).sum::<f64>() / n;
        let v = t.as_slice().iter().map(|&x| (x as f64 - m).powi(2)).sum::<f64>() / n;
        (m, v.sqrt())
    }

    #[test]
    fn constant_image_has_zero_variance() {
        let img = Tensor::full(&[1, 8, 8], 3.0f32).unwrap();
        assert!(matches!(normalize_image(&img), Err(Error::ZeroVariance)));
    }

    #[test]
    fn post_conditions_hold() {
        let img = Tensor::<f32>::randn(&[1, 64, 64], &mut Rng::new(1), 4.0).unwrap();
        let (out, _) = normalize_image(&img).unwrap();
        let (m, s) = moments(&out);
        assert!(m.abs() < 1e-6, "mean {m}");
        assert!((s - 1.0).abs() < 1e-6, "std {s}");
    }

    #[test]
    fn outlier_is_clipped_to_upper_quantile() {
        let mut data: Vec<f32> = (0..2000).map(|i| (i % 50) as f32 * 0.1).collect();
        data[777] = 1e6;
        let img = Tensor::from_vec(&[1, 40, 50], data.clone()).unwrap();
        let (out, stats) = normalize_image(&img).unwrap();

        let mut sorted: Vec<f64> = data.iter().map(|&v| v as f64).collect();
        sorted.sort_by(f64::total_cmp);
        let h = 1999.0 * 0.999;
        let lo = h as usize;
        let q = sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo]);
        assert_eq!(stats.clip_high, q);
        let expect = ((q - stats.mean) / stats.std) as f32;
        assert_eq!(out.as_slice()[777], expect);
        assert!(out.as_slice().iter().all(|&v| v <= expect));
    }

    #[test]
    fn normalized_image_is_a_fixed_point() {
        // equal mass on four levels, so the quantiles fall on the extreme levels
        let s5 = 5f32.sqrt();
        let levels = [-3.0 / s5, -1.0 / s5, 1.0 / s5, 3.0 / s5];
        let data: Vec<f32> = (0..4096).map(|i| levels[i % 4]).collect();
        let img = Tensor::from_vec(&[1, 64, 64], data).unwrap();
        let (out, _) = normalize_image(&img).unwrap();
        assert!(out.max_abs_diff(&img).unwrap() < 1e-6);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [0.0, 10.0];
        assert_eq!(quantile_sorted(&v, 0.25), 2.5);
        assert_eq!(quantile_sorted(&[4.0], 0.999), 4.0);
    }
}
