//! Node classification with mutual-information guided local and non-local
//! neighborhoods.
//!
//! The pipeline has two stages. First a small MLP produces self-embeddings and
//! a bilinear estimator is trained contrastively to score how much two nodes
//! share (`estimator`). The estimator then weights graph edges for Louvain
//! community detection (local neighborhoods) and drives a k-means style
//! clustering of the embeddings (non-local neighborhoods), see
//! `neighborhoods`. Finally attentive aggregation over both neighborhood kinds
//! feeds a classifier trained with cross-entropy (`model`). The `harness`
//! module runs repeated experiments and writes JSON reports.

pub mod error;
pub mod estimator;
pub mod graph;
pub mod harness;
pub mod model;
pub mod neighborhoods;
pub mod numerics;
pub mod synth;

#[cfg(test)]
mod properties;

pub use error::{Error, Result, Stage};
