//! Dataset splitting, confusion matrices and report files.

mod confusion;
mod report;
mod split;

pub use confusion::ConfusionMatrix;
pub use report::{emit_report, heatmap_image, FoldSummary, ReportInput};
pub use split::{split_dataset, DatasetSplit, SplitItem, SplitSpec};
