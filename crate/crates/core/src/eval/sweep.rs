//! Mean Dice of each method under every non-empty modality subset.

use rayon::prelude::*;

use crate::baselines::{mean_fill, mlp_impute, ImputationBundle};
use crate::data::{derive_binary_maps, Case, Category};
use crate::error::{Error, Result};
use crate::eval::metrics::dice;
use crate::labels::LabelMap;
use crate::model::{model_forward, predict_segmentation, HemisParams, ModalityMask};

/// Something that segments a case from a subset of its modalities.
pub trait Segmenter: Sync {
    fn name(&self) -> &str;
    fn segment(&self, case: &Case, mask: ModalityMask) -> Result<LabelMap>;
}

fn full_forward(params: &HemisParams<f32>, case: &Case, mask: ModalityMask) -> Result<LabelMap> {
    let slots: Vec<_> = (0..case.images.len())
        .map(|k| mask.contains(k).then_some(&case.images[k]))
        .collect();
    predict_segmentation(&model_forward(&slots, mask, params)?)
}

/// The hetero-modal network fed only the available modalities.
pub struct HemisSegmenter<'a>(pub &'a HemisParams<f32>);

impl Segmenter for HemisSegmenter<'_> {
    fn name(&self) -> &str {
        "HeMIS"
    }

    fn segment(&self, case: &Case, mask: ModalityMask) -> Result<LabelMap> {
        full_forward(self.0, case, mask)
    }
}

/// A complete-input network with absent modalities zero-filled.
pub struct MeanFillSegmenter<'a>(pub &'a HemisParams<f32>);

impl Segmenter for MeanFillSegmenter<'_> {
    fn name(&self) -> &str {
        "Mean"
    }

    fn segment(&self, case: &Case, mask: ModalityMask) -> Result<LabelMap> {
        let filled = mean_fill(case, mask)?;
        full_forward(self.0, &filled, ModalityMask::full(case.images.len())?)
    }
}

/// A complete-input network with absent modalities predicted by regressors.
pub struct MlpSegmenter<'a> {
    pub params: &'a HemisParams<f32>,
    pub bundle: &'a ImputationBundle,
}

impl Segmenter for MlpSegmenter<'_> {
    fn name(&self) -> &str {
        "MLP"
    }

    fn segment(&self, case: &Case, mask: ModalityMask) -> Result<LabelMap> {
        let filled = mlp_impute(case, mask, self.bundle)?;
        full_forward(self.params, &filled, ModalityMask::full(case.images.len())?)
    }
}

/// Presence strings (first character = first modality) in the order rows
/// are reported for four modalities: singles, pairs, triples, then all.
const FOUR_MODALITY_ORDER: [&str; 15] = [
    "0001", "0010", "0100", "1000", "0011", "0110", "1100", "0101", "1001", "1010", "1110",
    "1101", "1011", "0111", "1111",
];

/// Row order of the sweep. Four modalities follow the conventional table
/// layout; other counts go by subset size, then bitmask.
pub fn subset_order(n: usize) -> Result<Vec<ModalityMask>> {
    if n == 4 {
        return FOUR_MODALITY_ORDER
            .iter()
            .map(|s| {
                let present: Vec<bool> = s.chars().map(|c| c == '1').collect();
                ModalityMask::new(&present)
            })
            .collect();
    }
    let mut all = ModalityMask::all_nonempty(n)?;
    all.sort_by_key(|m| (m.count(), m.bits()));
    Ok(all)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetRow {
    pub mask: ModalityMask,
    /// Mean DSC indexed `[category][method]`.
    pub dsc: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetReport {
    pub modality_names: Vec<String>,
    pub methods: Vec<String>,
    pub categories: Vec<Category>,
    pub rows: Vec<SubsetRow>,
    pub n_cases: usize,
}

/// DSC as printed: two decimals.
pub fn rounded(dsc: f64) -> f64 {
    (dsc * 100.0).round() / 100.0
}

impl SubsetReport {
    pub fn category_index(&self, c: Category) -> Option<usize> {
        self.categories.iter().position(|&x| x == c)
    }

    pub fn method_index(&self, name: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == name)
    }

    pub fn row(&self, mask: ModalityMask) -> Option<&SubsetRow> {
        self.rows.iter().find(|r| r.mask == mask)
    }

    /// Index of the method credited with row `row` for `category`: the best
    /// printed DSC, ties going to the earliest method.
    pub fn winner(&self, row: usize, category: usize) -> usize {
        let v = &self.rows[row].dsc[category];
        let mut best = 0;
        for m in 1..v.len() {
            if rounded(v[m]) > rounded(v[best]) {
                best = m;
            }
        }
        best
    }

    /// Wins per method for one category.
    pub fn wins(&self, category: usize) -> Vec<usize> {
        let mut out = vec![0; self.methods.len()];
        for r in 0..self.rows.len() {
            out[self.winner(r, category)] += 1;
        }
        out
    }
}

/// Evaluate every method on every non-empty subset over `cases`.
pub fn sweep_subsets(methods: &[&dyn Segmenter], cases: &[Case], modality_names: &[String]) -> Result<SubsetReport> {
    if methods.is_empty() || cases.is_empty() {
        return Err(Error::Eval("need at least one method and one case".into()));
    }
    let n = modality_names.len();
    if let Some(c) = cases.iter().find(|c| c.images.len() != n) {
        return Err(Error::Eval(format!("case {} does not have {n} modalities", c.id)));
    }
    let truths = cases
        .iter()
        .map(|c| derive_binary_maps(&c.labels))
        .collect::<Result<Vec<_>>>()?;
    let categories = Category::ALL.to_vec();
    let mut rows = Vec::new();
    for mask in subset_order(n)? {
        let mut dsc = vec![vec![0.0; methods.len()]; categories.len()];
        for (m, method) in methods.iter().enumerate() {
            let per_case: Vec<Vec<f64>> = cases
                .par_iter()
                .zip(&truths)
                .map(|(case, truth)| {
                    let pred = derive_binary_maps(&method.segment(case, mask)?)?;
                    categories
                        .iter()
                        .map(|&c| dice(pred.get(c), truth.get(c)))
                        .collect()
                })
                .collect::<Result<_>>()?;
            for (ci, row) in dsc.iter_mut().enumerate() {
                row[m] = per_case.iter().map(|v| v[ci]).sum::<f64>() / cases.len() as f64;
            }
        }
        log::info!("subset {mask}: {:?}", dsc[0]);
        rows.push(SubsetRow { mask, dsc });
    }
    Ok(SubsetReport {
        modality_names: modality_names.to_vec(),
        methods: methods.iter().map(|m| m.name().to_string()).collect(),
        categories,
        rows,
        n_cases: cases.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_case, PhantomConfig};
    use crate::rng::Rng;

    struct Oracle;

    impl Segmenter for Oracle {
        fn name(&self) -> &str {
            "Oracle"
        }

        fn segment(&self, case: &Case, _: ModalityMask) -> Result<LabelMap> {
            Ok(case.labels.clone())
        }
    }

    struct Blank;

    impl Segmenter for Blank {
        fn name(&self) -> &str {
            "Blank"
        }

        fn segment(&self, case: &Case, _: ModalityMask) -> Result<LabelMap> {
            Ok(LabelMap::filled(case.height(), case.width(), 0))
        }
    }

    fn names() -> Vec<String> {
        crate::data::modality_names()
    }

    fn one_case() -> Vec<Case> {
        let cfg = PhantomConfig {
            height: 32,
            width: 32,
            ..PhantomConfig::default()
        };
        vec![generate_case("c", &mut Rng::new(2), &cfg).unwrap()]
    }

    #[test]
    fn fifteen_rows_in_table_order() {
        let order = subset_order(4).unwrap();
        assert_eq!(order.len(), 15);
        let mut dedup = order.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), 15);
        assert_eq!(order[0].indices(), vec![3]);
        assert_eq!(order[3].indices(), vec![0]);
        assert!(order[14].is_full());
        let sizes: Vec<usize> = order.iter().map(|m| m.count()).collect();
        assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(subset_order(3).unwrap().len(), 7);
    }

    #[test]
    fn perfect_predictor_scores_100() {
        let report = sweep_subsets(&[&Oracle, &Blank], &one_case(), &names()).unwrap();
        assert_eq!(report.rows.len(), 15);
        for row in &report.rows {
            for cat in &row.dsc {
                assert_eq!(cat[0], 100.0);
                assert_eq!(cat[1], 0.0);
            }
        }
        assert_eq!(report.wins(0), vec![15, 0]);
    }

    #[test]
    fn ties_credit_the_first_method() {
        let report = sweep_subsets(&[&Blank, &Oracle, &Oracle], &one_case(), &names()).unwrap();
        assert_eq!(report.wins(1), vec![0, 15, 0]);
    }

    #[test]
    fn full_row_mean_and_mlp_agree() {
        let cases = one_case();
        let p = HemisParams::init(
            crate::model::ArchConfig {
                backend_maps1: 3,
                backend_maps2: 3,
                frontend_maps: 4,
                kernel: 3,
                ..Default::default()
            },
            &mut Rng::new(1),
        )
        .unwrap();
        let bundle = ImputationBundle {
            modalities: 4,
            models: Default::default(),
        };
        let full = ModalityMask::full(4).unwrap();
        let a = MeanFillSegmenter(&p).segment(&cases[0], full).unwrap();
        let b = MlpSegmenter { params: &p, bundle: &bundle }.segment(&cases[0], full).unwrap();
        let c = HemisSegmenter(&p).segment(&cases[0], full).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }
}
