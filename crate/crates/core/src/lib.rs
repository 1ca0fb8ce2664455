//! Toxicity scoring from community reactions.
//!
//! PONOS (proportion of negative observed sentiments) scores a piece of
//! content by the share of its replies that a sentiment model `M` classifies
//! as negative within a community context. This crate computes the metric and
//! its weighted and net variants, classifies replies through pluggable
//! backends, predicts scores for unseen content, and evaluates classifiers
//! against assessor labels.

pub mod chat;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod knn;
pub mod metric;
pub mod pipeline;
pub mod pool;
pub mod predictor;
pub mod sentiment;
pub mod template;
pub mod thread_model;

#[cfg(feature = "test-support")]
pub mod testing;

pub use error::{Error, ErrorClass, Result};
