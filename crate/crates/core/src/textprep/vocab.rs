use std::collections::HashMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{read_to_string, write_string};
use crate::{Error, Result};

use super::{ParallelCorpus, Sentence};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const RESERVED: [&str; 4] = [PAD, UNK, BOS, EOS];
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const BOS_ID: u32 = 2;
pub const EOS_ID: u32 = 3;

/// Joint token ↔ id map. Ids are dense from 0, the four reserved symbols
/// come first, then tokens by descending training frequency.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    freqs: Vec<u64>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Build from `(token, frequency)` pairs already in id order.
    fn from_ranked(ranked: Vec<(String, u64)>) -> Self {
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let mut freqs = vec![0; RESERVED.len()];
        for (t, f) in ranked {
            tokens.push(t);
            freqs.push(f);
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocabulary { tokens, freqs, index }
    }

    /// Keep the most frequent tokens of `sentences` so that the vocabulary,
    /// reserved symbols included, has at most `size_cap` entries. Ties keep
    /// first-occurrence order.
    pub fn from_sentences<'a>(sentences: impl IntoIterator<Item = &'a Sentence>, size_cap: usize) -> Result<Self> {
        if size_cap < RESERVED.len() {
            return Err(Error::InvalidArgument(format!(
                "vocabulary cap {size_cap} is smaller than the {} reserved symbols",
                RESERVED.len()
            )));
        }
        let mut counts: HashMap<&str, (u64, usize)> = HashMap::new();
        let mut order = 0usize;
        for s in sentences {
            for t in s.tokens() {
                if RESERVED.contains(&t.as_str()) {
                    continue;
                }
                let e = counts.entry(t.as_str()).or_insert_with(|| {
                    order += 1;
                    (0, order)
                });
                e.0 += 1;
            }
        }
        let mut ranked: Vec<(&str, (u64, usize))> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
        ranked.truncate(size_cap - RESERVED.len());
        Ok(Self::from_ranked(ranked.into_iter().map(|(t, (f, _))| (t.to_string(), f)).collect()))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or [`UNK_ID`] when it is out of vocabulary.
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens.get(id as usize).map(String::as_str).unwrap_or(UNK)
    }

    /// The token as the model sees it: itself, or [`UNK`] when out of vocabulary.
    pub fn vocab_form<'a>(&'a self, token: &'a str) -> &'a str {
        if self.contains(token) {
            token
        } else {
            UNK
        }
    }

    pub fn frequency(&self, token: &str) -> u64 {
        self.index.get(token).map(|&i| self.freqs[i as usize]).unwrap_or(0)
    }

    pub fn encode(&self, sentence: &Sentence) -> Vec<u32> {
        sentence.tokens().iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    /// `token<TAB>frequency` lines for the non-reserved entries, in id order.
    pub fn to_text(&self) -> String {
        self.tokens
            .iter()
            .zip(&self.freqs)
            .skip(RESERVED.len())
            .map(|(t, f)| format!("{t}\t{f}\n"))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut ranked = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let parsed = line
                .split_once('\t')
                .and_then(|(t, f)| f.trim().parse::<u64>().ok().map(|f| (t.to_string(), f)));
            match parsed {
                Some(entry) if !entry.0.is_empty() => ranked.push(entry),
                _ => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: "expected token<TAB>frequency".into(),
                    })
                }
            }
        }
        Ok(Self::from_ranked(ranked))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_string(path, &self.to_text())
    }

    /// Hex SHA-256 over the id-ordered token list, stored in checkpoints.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Joint vocabulary over both sides of the training corpus. Each source line
/// is counted before its target line.
pub fn build_vocab(train: &ParallelCorpus, size_cap: usize) -> Result<Vocabulary> {
    let interleaved = train.source.iter().zip(&train.target).flat_map(|(s, t)| [s, t]);
    Vocabulary::from_sentences(interleaved, size_cap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(src: &[&str], tgt: &[&str]) -> ParallelCorpus {
        ParallelCorpus::new(
            src.iter().map(|l| Sentence::from_line(l)).collect(),
            tgt.iter().map(|l| Sentence::from_line(l)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn two_tokens_under_generous_cap() {
        let v = build_vocab(&corpus(&["a b a"], &["b"]), 10).unwrap();
        assert_eq!(v.len(), 6);
        assert_eq!(v.token(4), "a");
        assert_eq!(v.token(5), "b");
        assert_eq!(v.frequency("b"), 2);
    }

    #[test]
    fn absent_token_maps_to_unk() {
        let v = build_vocab(&corpus(&["a"], &["b"]), 10).unwrap();
        assert_eq!(v.id("zzz"), UNK_ID);
        assert_eq!(v.vocab_form("zzz"), UNK);
        assert_eq!(v.vocab_form("a"), "a");
    }

    #[test]
    fn cap_counts_reserved_symbols_and_ties_keep_first_occurrence() {
        let v = build_vocab(&corpus(&["c b a", "x"], &["a b c", "x"]), 6).unwrap();
        // a, b, c, x all occur twice; c occurs first
        assert_eq!(v.len(), 6);
        assert_eq!(&v.decode(&[4, 5]), &["c", "b"]);
        assert!(build_vocab(&corpus(&["a"], &["b"]), 3).is_err());
    }

    #[test]
    fn file_round_trip_preserves_ids() {
        let v = build_vocab(&corpus(&["x y z y", "q"], &["y z", "q q"]), 100).unwrap();
        let again = Vocabulary::from_text(&v.to_text()).unwrap();
        assert_eq!(v, again);
        assert_eq!(v.content_hash(), again.content_hash());
        assert!(Vocabulary::from_text("a\tnotanumber\n").is_err());
    }
}
