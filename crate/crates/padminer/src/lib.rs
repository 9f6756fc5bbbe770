//! Pattern-based anomaly detection for networks of multivariate time series.
//!
//! The pipeline discretizes sliding windows into symbol sequences (SAX),
//! mines frequent cohesive compressing sequential patterns, embeds windows by
//! pattern occurrence, and scores them with FPOF or an isolation forest.
//! Device context comes from a recovered similarity network: entities are
//! extended with the similar series of connected devices before scoring.

pub mod discretize;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod mining;
pub mod network;
pub mod pipeline;
pub mod scoring;
pub mod series;

pub use error::{Error, Result};
