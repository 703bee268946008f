//! Salience-regularized attention for more faithful transformer explanations.
//!
//! A small transformer classifier is trained with an auxiliary KL term that
//! pulls its last-layer CLS attention toward an a priori word-salience
//! distribution (TextRank by default). The crate also provides the
//! feature-attribution methods and faithfulness metrics used to compare
//! regularized models with a vanilla baseline.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attribution;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod salience;
pub mod seed;
pub mod tensor;
pub mod training;

pub use error::{Error, ErrorKind, Result};
