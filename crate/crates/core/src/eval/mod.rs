//! Segmentation metrics, the missing-modality sweep and its reports.

pub mod metrics;
pub mod overlay;
pub mod report;
pub mod sweep;

pub use metrics::{components, dice, vd_tpr_fpr, LesionMetrics};
pub use overlay::{overlay_ppm, render_overlay};
pub use report::{emit_report, report_markdown, report_tsv, ReportFormat};
pub use sweep::{
    subset_order, sweep_subsets, HemisSegmenter, MeanFillSegmenter, MlpSegmenter, Segmenter,
    SubsetReport, SubsetRow,
};
