//! Measures how multi-class text classification degrades as the label set
//! grows one class at a time.
//!
//! The pipeline: [`corpus`] loads and samples labeled descriptions,
//! [`features`] hashes them into sparse vectors, [`classifier`] trains a
//! softmax model, [`metrics`] scores the held-out split, [`sweep`] repeats
//! this for K = k_min..=k_max, [`analysis`] fits metric-vs-K lines and
//! [`report`] renders SVG charts and a markdown summary. [`cli`] wires it
//! together behind the `classcurve` binary.

pub mod analysis;
pub mod classifier;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod features;
pub mod metrics;
pub mod report;
pub mod sweep;
pub mod synth;
pub mod util;

pub use error::{Error, Result};
