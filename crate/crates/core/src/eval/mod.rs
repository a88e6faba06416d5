//! Clustering accuracy with optimal label matching, and benchmark reports.

mod acc;
mod hungarian;
mod report;

pub use acc::{acc, corpus_acc, ConfusionMatrix};
pub use hungarian::{hungarian, Assignment};
pub use report::{make_report, BenchReport, BenchRow, CSV_HEADER};
