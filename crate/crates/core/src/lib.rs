//! Dictionary attachment for rare words in neural machine translation.
//!
//! The crate covers the whole desk-scale pipeline:
//!
//! * [`dict`]: CEDICT and TSV dictionary parsing and cleaning.
//! * [`textprep`]: corpus splitting, joint BPE, vocabularies and frequency tables.
//! * [`attach`]: dictionary matching, span fusion and definition attachment.
//! * [`encoding`]: sinusoidal, word and definition-position encodings.
//! * [`model`]: a small Transformer encoder-decoder with hand-written backprop,
//!   training, beam search, gradient checking and checkpoints.
//! * [`eval`]: corpus BLEU and paired bootstrap significance.
//! * [`experiment`]: experiment configs, the four system conditions, threshold
//!   sweeps and the synthetic rare-word task.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`). Training runs in
//! `f32`; gradient checks run in `f64`. The aliases below name the common
//! instantiations.

pub mod attach;
pub mod dict;
pub mod encoding;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod scalar;
pub mod seed;
pub mod textprep;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single-precision model used for training and translation.
pub type Model32 = model::TransformerModel<f32>;
/// Double-precision model used for gradient checks.
pub type Model64 = model::TransformerModel<f64>;
pub type Matrix32 = model::Matrix<f32>;
pub type Matrix64 = model::Matrix<f64>;
pub type EncodedSequence32 = encoding::EncodedSequence<f32>;
pub type EncodedSequence64 = encoding::EncodedSequence<f64>;
