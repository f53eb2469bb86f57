//! Central finite-difference check of analytic gradients.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Below this magnitude gradients are compared absolutely rather than
/// relatively.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

/// A collection of named parameter tensors.
pub trait ParamSet<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)>;
    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)>;
}

impl<T> ParamSet<T> for Vec<Tensor<T>> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        self.iter().enumerate().map(|(i, t)| (format!("p{i}"), t)).collect()
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        self.iter_mut().enumerate().map(|(i, t)| (format!("p{i}"), t)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

impl GradCheckReport {
    pub fn pass_fraction(&self) -> f64 {
        if self.entries.is_empty() {
            return 1.0;
        }
        let ok = self
            .entries
            .iter()
            .filter(|e| e.rel_error < self.tolerance)
            .count();
        ok as f64 / self.entries.len() as f64
    }

    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.rel_error).fold(0.0, f64::max)
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.rel_error < self.tolerance)
    }

    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    /// One line per scalar parameter: name, analytic, numeric, relative error.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("param\tanalytic\tnumeric\trel_error\n");
        for e in &self.entries {
            writeln!(
                out,
                "{}[{}]\t{:.12e}\t{:.12e}\t{:.3e}",
                e.name, e.index, e.analytic, e.numeric, e.rel_error
            )
            .expect("write to string");
        }
        out
    }
}

/// Compare `analytic` against `(f(p + eps) - f(p - eps)) / 2eps` for every
/// scalar in `params`. `params` is restored exactly before returning.
pub fn grad_check<P, F>(
    params: &mut P,
    analytic: &P,
    mut loss: F,
    eps: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    P: ParamSet<f64>,
    F: FnMut(&P) -> Result<f64>,
{
    let grads: Vec<(String, Vec<f64>)> = analytic
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.as_slice().to_vec()))
        .collect();
    let layout: Vec<(String, usize)> = params
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.len()))
        .collect();
    if layout.len() != grads.len()
        || layout.iter().zip(&grads).any(|((n, len), (gn, g))| n != gn || *len != g.len())
    {
        return Err(Error::InvalidArgument(
            "analytic gradients do not mirror the parameter set".into(),
        ));
    }

    let set = |params: &mut P, t: usize, i: usize, v: f64| {
        params.named_tensors_mut()[t].1.as_mut_slice()[i] = v;
    };
    let mut entries = Vec::new();
    for (t, (name, len)) in layout.iter().enumerate() {
        for i in 0..*len {
            let original = params.named_tensors()[t].1.as_slice()[i];
            set(params, t, i, original + eps);
            let plus = loss(params);
            set(params, t, i, original - eps);
            let minus = loss(params);
            set(params, t, i, original);
            let (plus, minus) = (plus?, minus?);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!("loss while perturbing {name}[{i}]")));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let a = grads[t].1[i];
            if !a.is_finite() {
                return Err(Error::NonFinite(format!("analytic gradient {name}[{i}]")));
            }
            entries.push(GradCheckEntry {
                name: name.clone(),
                index: i,
                analytic: a,
                numeric,
                rel_error: relative_error(a, numeric),
            });
        }
    }
    Ok(GradCheckReport { tolerance, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_loss(p: &Vec<Tensor<f64>>) -> Result<f64> {
        let coeffs = [3.0, -1.5, 0.25];
        Ok(p[0].as_slice().iter().zip(coeffs).map(|(a, c)| a * c).sum::<f64>() + 2.0)
    }

    #[test]
    fn linear_model_is_exact() {
        let mut params = vec![Tensor::from_vec(&[3], vec![0.3, -0.7, 1.1]).unwrap()];
        let grads = vec![Tensor::from_vec(&[3], vec![3.0, -1.5, 0.25]).unwrap()];
        let report = grad_check(&mut params, &grads, linear_loss, 1e-6, 1e-8).unwrap();
        assert!(report.all_pass(), "max rel error {}", report.max_rel_error());
        assert!(report.max_rel_error() < 1e-8);
        assert_eq!(params[0].as_slice(), &[0.3, -0.7, 1.1]);
    }

    #[test]
    fn corrupted_gradient_is_reported() {
        let mut params = vec![Tensor::from_vec(&[3], vec![0.3, -0.7, 1.1]).unwrap()];
        let grads = vec![Tensor::from_vec(&[3], vec![3.0, 1.5, 0.25]).unwrap()];
        let report = grad_check(&mut params, &grads, linear_loss, 1e-6, 1e-4).unwrap();
        assert!(!report.all_pass());
        assert_eq!(report.worst().unwrap().index, 1);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let mut params = vec![Tensor::from_vec(&[1], vec![1.0]).unwrap()];
        let grads = params.clone();
        let r = grad_check(&mut params, &grads, |_| Ok(f64::NAN), 1e-6, 1e-4);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn tsv_has_one_row_per_scalar() {
        let mut params = vec![Tensor::from_vec(&[3], vec![0.3, -0.7, 1.1]).unwrap()];
        let grads = vec![Tensor::from_vec(&[3], vec![3.0, -1.5, 0.25]).unwrap()];
        let report = grad_check(&mut params, &grads, linear_loss, 1e-6, 1e-8).unwrap();
        let tsv = report.to_tsv();
        assert_eq!(tsv.lines().count(), 4);
        assert!(tsv.lines().nth(1).unwrap().starts_with("p0[0]\t"));
    }
}
