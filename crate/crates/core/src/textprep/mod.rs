//! Corpus handling: sentences, parallel corpora, splitting, joint BPE and
//! vocabularies.
//!
//! Corpus files hold one sentence per line with space-separated tokens;
//! parallel files are line-aligned.

mod bpe;
mod vocab;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, write_string};
use crate::{Error, Result};

pub use bpe::{apply_bpe, learn_joint_bpe, learn_bpe_from_words, undo_bpe, BpeModel, BPE_MARKER, END_OF_WORD};
pub use vocab::{build_vocab, Vocabulary, BOS, BOS_ID, EOS, EOS_ID, PAD, PAD_ID, RESERVED, UNK, UNK_ID};

/// A tokenized sentence. Tokens are non-empty and contain no whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Sentence(Vec<String>);

impl Sentence {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if let Some(bad) = tokens.iter().find(|t| t.is_empty() || t.chars().any(char::is_whitespace)) {
            return Err(Error::InvalidArgument(format!("invalid token {bad:?}")));
        }
        Ok(Sentence(tokens))
    }

    pub fn from_line(line: &str) -> Self {
        Sentence(line.split_whitespace().map(str::to_string).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_tokens(self) -> Vec<String> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_line(&self) -> String {
        self.0.join(" ")
    }
}

impl From<&str> for Sentence {
    fn from(line: &str) -> Self {
        Sentence::from_line(line)
    }
}

pub fn read_sentences(path: &Path) -> Result<Vec<Sentence>> {
    Ok(read_to_string(path)?.lines().map(Sentence::from_line).collect())
}

pub fn write_sentences(path: &Path, sentences: &[Sentence]) -> Result<()> {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&s.to_line());
        out.push('\n');
    }
    write_string(path, &out)
}

/// Line-aligned source and target sentences.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParallelCorpus {
    pub source: Vec<Sentence>,
    pub target: Vec<Sentence>,
}

impl ParallelCorpus {
    pub fn new(source: Vec<Sentence>, target: Vec<Sentence>) -> Result<Self> {
        if source.len() != target.len() {
            return Err(Error::InvalidArgument(format!(
                "parallel corpus sides differ in length: {} vs {}",
                source.len(),
                target.len()
            )));
        }
        Ok(ParallelCorpus { source, target })
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }

    pub fn read(source: &Path, target: &Path) -> Result<Self> {
        Self::new(read_sentences(source)?, read_sentences(target)?)
    }

    pub fn write(&self, source: &Path, target: &Path) -> Result<()> {
        write_sentences(source, &self.source)?;
        write_sentences(target, &self.target)
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        ParallelCorpus {
            source: self.source[range.clone()].to_vec(),
            target: self.target[range].to_vec(),
        }
    }

    pub fn extend(&mut self, other: ParallelCorpus) {
        self.source.extend(other.source);
        self.target.extend(other.target);
    }
}

/// Line counts of a contiguous train/dev/test split: train and dev get
/// `floor(n * fraction)` lines, test takes the remainder.
pub fn split_sizes(n: usize, fractions: [f64; 3]) -> Result<[usize; 3]> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::InvalidArgument(format!("fractions out of range: {fractions:?}")));
    }
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("fractions must sum to 1, got {sum}")));
    }
    // the epsilon keeps products like 0.29 * 100 = 28.999... from losing a line
    let floor = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
    let train = floor(fractions[0]).min(n);
    let dev = floor(fractions[1]).min(n - train);
    Ok([train, dev, n - train - dev])
}

/// Split into contiguous train, dev and test portions, in that order.
pub fn split_corpus(corpus: &ParallelCorpus, fractions: [f64; 3]) -> Result<(ParallelCorpus, ParallelCorpus, ParallelCorpus)> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("cannot split an empty corpus".into()));
    }
    let [train, dev, _] = split_sizes(corpus.len(), fractions)?;
    Ok((
        corpus.slice(0..train),
        corpus.slice(train..train + dev),
        corpus.slice(train + dev..corpus.len()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(n: usize) -> ParallelCorpus {
        let s: Vec<Sentence> = (0..n).map(|i| Sentence::from_line(&format!("w{i}"))).collect();
        ParallelCorpus::new(s.clone(), s).unwrap()
    }

    #[test]
    fn split_ten_lines() {
        let (a, b, c) = split_corpus(&corpus(10), [0.8, 0.1, 0.1]).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
        assert_eq!(a.source[0].to_line(), "w0");
        assert_eq!(c.source[0].to_line(), "w9");
    }

    #[test]
    fn split_spoken_sized_corpus() {
        assert_eq!(split_sizes(220_000, [0.8, 0.1, 0.1]).unwrap(), [176_000, 22_000, 22_000]);
    }

    #[test]
    fn split_five_lines_floor_then_remainder() {
        assert_eq!(split_sizes(5, [0.8, 0.1, 0.1]).unwrap(), [4, 0, 1]);
    }

    #[test]
    fn floor_rule_matches_integer_arithmetic() {
        // 80/10/10 in exact integer arithmetic
        for n in 1..=20usize {
            let expected = [n * 8 / 10, n / 10, n - n * 8 / 10 - n / 10];
            assert_eq!(split_sizes(n, [0.8, 0.1, 0.1]).unwrap(), expected, "n = {n}");
        }
    }

    #[test]
    fn invalid_fractions_rejected() {
        assert!(split_sizes(10, [0.8, 0.1, 0.2]).is_err());
        assert!(split_sizes(10, [1.2, -0.1, -0.1]).is_err());
        assert!(split_corpus(&ParallelCorpus::default(), [0.8, 0.1, 0.1]).is_err());
    }

    #[test]
    fn mismatched_sides_rejected() {
        assert!(ParallelCorpus::new(vec![Sentence::from_line("a")], vec![]).is_err());
    }

    #[test]
    fn sentence_validation() {
        assert!(Sentence::new(vec!["a b".into()]).is_err());
        assert!(Sentence::new(vec!["".into()]).is_err());
        assert_eq!(Sentence::from_line("  a   b ").tokens(), ["a", "b"]);
    }
}
