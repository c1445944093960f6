//! Ordinal-response vulnerability ranking: rank-transformed linear
//! regression, cumulative-logit, and conditional mid-quantile models, with
//! rank-based accuracy indices (RGA/AGR), a Monte Carlo simulation harness,
//! and a CVE data-source ingestion pipeline.

pub mod accuracy;
pub mod datamodel;
pub mod error;
pub mod evaluate;
pub mod ingest;
pub mod midq;
pub mod optim;
pub mod ordlogit;
pub mod ranklinear;
pub mod simharness;

pub use error::{Error, Result};
