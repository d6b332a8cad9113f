//! Single-domain generalization for paired visual/tactile embeddings.
//!
//! The pipeline maps embeddings into a fractional Fourier domain
//! ([`dfrft`]), aligns modalities with language-guided attention ([`mffa`]),
//! diversifies the fused feature with a binary expansion tree ([`dtg`]), and
//! trains a shared classifier ([`model`]). [`data`] provides a synthetic
//! multi-domain generator and the embedding file format, [`metrics`] the
//! evaluation measures, and [`cli`] the command-line front end.

pub mod cli;
pub mod data;
pub mod dfrft;
pub mod dtg;
mod error;
pub mod metrics;
pub mod mffa;
pub mod model;
pub mod numeric;
pub mod par;

pub use error::{Error, Result};
