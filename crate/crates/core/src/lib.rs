//! Batch evaluation harness for LLM-reliant systems: dataset curation and
//! quality quantification, a multi-metric scoring suite, and robustness
//! methodology with statistically qualified reports.

pub mod corpus;
pub mod error;
pub mod harness;
pub mod metric;
pub mod model_metrics;
pub mod overlap;
pub mod quality;
pub mod report;
pub mod robustness;
pub mod stats;

pub use error::{EvalError, Result};
