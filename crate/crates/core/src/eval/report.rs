//! TSV and markdown renderings of a subset sweep.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::eval::sweep::SubsetReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Tsv,
    Markdown,
}

/// One line per (subset, category, method).
pub fn report_tsv(report: &SubsetReport) -> String {
    let mut out = String::new();
    for name in &report.modality_names {
        out.push_str(name);
        out.push('\t');
    }
    out.push_str("category\tmethod\tdsc\tn_cases\n");
    for row in &report.rows {
        let presence: String = row
            .mask
            .to_bools()
            .iter()
            .map(|&p| if p { "1\t" } else { "0\t" })
            .collect();
        for (ci, cat) in report.categories.iter().enumerate() {
            for (mi, method) in report.methods.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{presence}{}\t{method}\t{:.2}\t{}",
                    cat.name(),
                    row.dsc[ci][mi],
                    report.n_cases
                );
            }
        }
    }
    out
}

/// Table with ◦ (absent) / • (present) columns, bold winners and a wins row.
pub fn report_markdown(report: &SubsetReport) -> String {
    let mut out = String::from("|");
    for name in &report.modality_names {
        let _ = write!(out, " {name} |");
    }
    for cat in &report.categories {
        for m in &report.methods {
            let _ = write!(out, " {} {m} |", cat.name());
        }
    }
    out.push_str("\n|");
    let cols = report.modality_names.len() + report.categories.len() * report.methods.len();
    for i in 0..cols {
        out.push_str(if i < report.modality_names.len() { ":-:|" } else { "--:|" });
    }
    out.push('\n');
    for (r, row) in report.rows.iter().enumerate() {
        out.push('|');
        for p in row.mask.to_bools() {
            out.push_str(if p { " • |" } else { " ◦ |" });
        }
        for ci in 0..report.categories.len() {
            let win = report.winner(r, ci);
            for (mi, &v) in row.dsc[ci].iter().enumerate() {
                if mi == win {
                    let _ = write!(out, " **{v:.2}** |");
                } else {
                    let _ = write!(out, " {v:.2} |");
                }
            }
        }
        out.push('\n');
    }
    let _ = write!(out, "| # Wins / {} |", report.rows.len());
    for _ in 1..report.modality_names.len() {
        out.push_str("  |");
    }
    for ci in 0..report.categories.len() {
        for w in report.wins(ci) {
            let _ = write!(out, " {w} |");
        }
    }
    out.push('\n');
    out
}

pub fn emit_report(report: &SubsetReport, path: &Path, format: ReportFormat) -> Result<()> {
    let text = match format {
        ReportFormat::Tsv => report_tsv(report),
        ReportFormat::Markdown => report_markdown(report),
    };
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Category;
    use crate::eval::sweep::{rounded, subset_order, SubsetRow};
    use crate::rng::Rng;

    fn fake(seed: u64) -> SubsetReport {
        let mut rng = Rng::new(seed);
        SubsetReport {
            modality_names: crate::data::modality_names(),
            methods: vec!["HeMIS".into(), "Mean".into(), "MLP".into()],
            categories: Category::ALL.to_vec(),
            rows: subset_order(4)
                .unwrap()
                .into_iter()
                .map(|mask| SubsetRow {
                    mask,
                    dsc: (0..3)
                        .map(|_| (0..3).map(|_| rng.uniform_range(0.0, 100.0)).collect())
                        .collect(),
                })
                .collect(),
            n_cases: 7,
        }
    }

    #[test]
    fn deterministic_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.md"), dir.path().join("b.md"));
        emit_report(&fake(1), &a, ReportFormat::Markdown).unwrap();
        emit_report(&fake(1), &b, ReportFormat::Markdown).unwrap();
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
        assert_eq!(report_tsv(&fake(1)), report_tsv(&fake(1)));
    }

    #[test]
    fn markdown_shape() {
        let md = report_markdown(&fake(2));
        let lines: Vec<&str> = md.lines().collect();
        // header, separator, 15 rows, wins
        assert_eq!(lines.len(), 18);
        assert!(lines[2].starts_with("| ◦ | ◦ | ◦ | • |"));
        assert!(lines[16].starts_with("| • | • | • | • |"));
        assert!(lines[17].starts_with("| # Wins / 15 |"));
    }

    #[test]
    fn tsv_has_two_decimals_and_all_rows() {
        let tsv = report_tsv(&fake(3));
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "F\tT1\tT1c\tT2\tcategory\tmethod\tdsc\tn_cases");
        assert_eq!(lines.len(), 1 + 15 * 3 * 3);
        for l in &lines[1..] {
            let dsc = l.split('\t').nth(6).unwrap();
            assert_eq!(dsc.split('.').nth(1).unwrap().len(), 2);
        }
    }

    #[test]
    fn wins_recomputed_from_printed_values() {
        let report = fake(4);
        let tsv = report_tsv(&report);
        for (ci, cat) in report.categories.iter().enumerate() {
            let mut wins = vec![0; 3];
            for chunk in tsv
                .lines()
                .skip(1)
                .filter(|l| l.split('\t').nth(4) == Some(cat.name()))
                .collect::<Vec<_>>()
                .chunks(3)
            {
                let v: Vec<f64> = chunk
                    .iter()
                    .map(|l| l.split('\t').nth(6).unwrap().parse().unwrap())
                    .collect();
                let mut best = 0;
                for m in 1..3 {
                    if v[m] > v[best] {
                        best = m;
                    }
                }
                wins[best] += 1;
            }
            assert_eq!(wins, report.wins(ci));
            assert_eq!(wins.iter().sum::<usize>(), 15);
        }
        assert_eq!(rounded(12.345_001), 12.35);
    }
}
