//! Headword lookup, training frequencies and leftmost-longest span selection.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dict::Dictionary;
use crate::textprep::Sentence;
use crate::{Error, Result};

/// Frequency threshold `k`: a match is defined when its training count is at
/// most `k`. `Infinite` defines every match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Threshold {
    Count(u64),
    Infinite,
}

impl Threshold {
    pub fn admits(self, frequency: u64) -> bool {
        match self {
            Threshold::Count(k) => frequency <= k,
            Threshold::Infinite => true,
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Count(k) => write!(f, "{k}"),
            Threshold::Infinite => f.write_str("inf"),
        }
    }
}

impl From<Threshold> for String {
    fn from(k: Threshold) -> String {
        k.to_string()
    }
}

impl TryFrom<String> for Threshold {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(Threshold::Infinite),
            other => other
                .parse::<u64>()
                .map(Threshold::Count)
                .map_err(|_| Error::InvalidArgument(format!("threshold must be a count or `inf`, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MatchSpan {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub headword: Vec<String>,
}

impl MatchSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Default, Clone)]
struct TrieNode {
    children: HashMap<String, usize>,
    terminal: bool,
}

/// Token-level trie over dictionary headwords.
#[derive(Debug, Clone)]
pub struct Matcher {
    nodes: Vec<TrieNode>,
}

impl Matcher {
    pub fn new(dict: &Dictionary) -> Self {
        let mut nodes = vec![TrieNode::default()];
        for entry in dict.iter() {
            let mut cur = 0;
            for tok in &entry.headword {
                cur = match nodes[cur].children.get(tok) {
                    Some(&next) => next,
                    None => {
                        nodes.push(TrieNode::default());
                        let next = nodes.len() - 1;
                        nodes[cur].children.insert(tok.clone(), next);
                        next
                    }
                };
            }
            nodes[cur].terminal = true;
        }
        Matcher { nodes }
    }

    /// Lengths of all headwords that start at `start`, shortest first.
    pub fn lengths_at(&self, tokens: &[String], start: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = 0;
        for (offset, tok) in tokens[start..].iter().enumerate() {
            match self.nodes[cur].children.get(tok) {
                Some(&next) => {
                    cur = next;
                    if self.nodes[cur].terminal {
                        out.push(offset + 1);
                    }
                }
                None => break,
            }
        }
        out
    }

    /// Leftmost-longest selection: scan left to right, take the longest
    /// admissible headword at each position, resume after it.
    pub fn find(&self, sentence: &Sentence, freq: &FrequencyTable, k: Threshold, single_word_only: bool) -> Vec<MatchSpan> {
        let tokens = sentence.tokens();
        let mut spans = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let best = self
                .lengths_at(tokens, i)
                .into_iter()
                .filter(|&len| !single_word_only || len == 1)
                .filter(|&len| k.admits(freq.count(&tokens[i..i + len])))
                .max();
            match best {
                Some(len) => {
                    spans.push(MatchSpan {
                        start: i,
                        end: i + len,
                        headword: tokens[i..i + len].to_vec(),
                    });
                    i += len;
                }
                None => i += 1,
            }
        }
        spans
    }
}

/// Training-corpus counts of every unigram and of every multi-token
/// dictionary headword, counted as exact token-sequence occurrences.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: HashMap<Vec<String>, u64>,
}

impl FrequencyTable {
    pub fn from_sentences<'a>(sentences: impl IntoIterator<Item = &'a Sentence>, dict: &Dictionary) -> Self {
        let matcher = Matcher::new(dict);
        let mut counts: HashMap<Vec<String>, u64> = HashMap::new();
        for s in sentences {
            let tokens = s.tokens();
            for i in 0..tokens.len() {
                *counts.entry(vec![tokens[i].clone()]).or_insert(0) += 1;
                for len in matcher.lengths_at(tokens, i) {
                    if len > 1 {
                        *counts.entry(tokens[i..i + len].to_vec()).or_insert(0) += 1;
                    }
                }
            }
        }
        FrequencyTable { counts }
    }

    pub fn count(&self, tokens: &[String]) -> u64 {
        self.counts.get(tokens).copied().unwrap_or(0)
    }
}

/// Convenience wrapper that builds the matcher on the fly.
pub fn find_matches(sentence: &Sentence, dict: &Dictionary, freq: &FrequencyTable, k: Threshold, single_word_only: bool) -> Vec<MatchSpan> {
    Matcher::new(dict).find(sentence, freq, k, single_word_only)
}
