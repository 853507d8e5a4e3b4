//! Language-model surprisal and semantic-similarity predictors for N400
//! amplitude, with a small mixed-model engine to test them.
//!
//! Data flows `ingest` -> `metrics` -> `lmm` -> `stats` -> `pipeline`;
//! `synth` generates planted-truth datasets in the same input formats.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
mod error;
pub mod ingest;
pub mod lmm;
pub mod metrics;
pub mod pipeline;
pub mod stats;
pub mod synth;

pub use error::Error;
