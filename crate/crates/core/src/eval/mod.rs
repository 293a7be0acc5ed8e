//! Retrieval metrics, size-bucket reports and synthetic data generators.

mod metrics;
mod report;
pub mod synth;

pub use metrics::{average_precision, evaluate_rankings, mean_average_precision, GroundTruth, QueryTruth};
pub use report::{rank_gain_report, BucketRow, GainReport, DEFAULT_SIZE_EDGES};
