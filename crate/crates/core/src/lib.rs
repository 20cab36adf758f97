//! Encoding-model toolkit for MEG sentence-reading data.
//!
//! Word-in-context feature vectors are mapped to windowed MEG responses with
//! ridge regression (penalty chosen by generalized cross-validation) and the
//! fit is scored with the 2v2 pairwise classification test. Around that core
//! sit micro-context sensitivity tests, synthetic-data augmentation, a
//! template corpus builder and a linear-Gaussian simulator used as ground
//! truth for every stage.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
#[cfg(feature = "cli")]
pub mod cli;
pub mod corpus;
pub mod data;
pub mod error;
pub mod eval;
pub mod features;
mod par;
pub mod plot;
pub mod prep;
pub mod ridge;
pub mod rng;
pub mod sensitivity;
pub mod sim;

pub use error::{Error, Result};
