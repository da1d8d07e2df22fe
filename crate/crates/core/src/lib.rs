//! Plant-health text pipeline: bulletin ingestion, rule-based cleaning, weakly
//! labeled multi-label datasets, a pluggable classifier harness, evaluation
//! metrics and keyword filtering of social-media posts.

pub mod clean;
pub mod dataset;
pub mod harness;
pub mod ingest;
pub mod metrics;
pub mod social;
pub mod synthetic;
pub mod text;
