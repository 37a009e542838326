//! Corpus BLEU and paired bootstrap resampling.

mod bleu;
mod bootstrap;

pub use bleu::{bleu, corpus_bleu_from_stats, sentence_stats, tokenize_13a, BleuReport, Casing, SentenceStats, MAX_ORDER};
pub use bootstrap::{bootstrap_significance, BootstrapOptions, SignificanceResult};
