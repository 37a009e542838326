//! Joint byte pair encoding with `@@` continuation markers.
//!
//! Words are learned as character sequences whose last symbol carries an
//! end-of-word suffix, so merges never cross word boundaries and a subword at
//! the end of a word is distinct from the same string inside one.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};
use std::path::Path;

use crate::error::{read_to_string, write_string};
use crate::{Error, Result};

use super::Sentence;

pub const BPE_MARKER: &str = "@@";
pub const END_OF_WORD: &str = "</w>";

/// Ordered merge operations.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BpeModel {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

impl BpeModel {
    pub fn from_merges(merges: Vec<(String, String)>) -> Result<Self> {
        let mut ranks = HashMap::with_capacity(merges.len());
        for (i, pair) in merges.iter().enumerate() {
            if ranks.insert(pair.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate merge {} {}", pair.0, pair.1)));
            }
        }
        Ok(BpeModel { merges, ranks })
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    /// One `left right` pair per line.
    pub fn to_text(&self) -> String {
        self.merges.iter().map(|(l, r)| format!("{l} {r}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut merges = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with("#version") {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => merges.push((l.to_string(), r.to_string())),
                _ => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: "expected `left right`".into(),
                    })
                }
            }
        }
        Self::from_merges(merges)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_string(path, &self.to_text())
    }

    /// Segment one word into subwords, without markers. Replaying merges in
    /// learned order is the same as repeatedly applying the lowest-ranked
    /// adjacent pair, since a merge only creates pairs of higher rank.
    pub fn segment_word(&self, word: &str) -> Vec<String> {
        let mut symbols = initial_symbols(word);
        loop {
            let best = symbols
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|&r| (r, i)))
                .min();
            let Some((rank, _)) = best else { break };
            let (left, right) = &self.merges[rank];
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == left && &symbols[i + 1] == right {
                    merged.push(format!("{left}{right}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
        }
        if let Some(last) = symbols.last_mut() {
            let stripped = last.strip_suffix(END_OF_WORD).unwrap_or(last).to_string();
            *last = stripped;
        }
        symbols
    }
}

fn initial_symbols(word: &str) -> Vec<String> {
    let mut symbols: Vec<String> = word.chars().map(String::from).collect();
    if let Some(last) = symbols.last_mut() {
        last.push_str(END_OF_WORD);
    }
    symbols
}

/// Segment every word and mark all but the last subword of each with `@@`.
pub fn apply_bpe(sentence: &Sentence, model: &BpeModel) -> Sentence {
    let mut out = Vec::with_capacity(sentence.len() * 2);
    for word in sentence.tokens() {
        let pieces = model.segment_word(word);
        let n = pieces.len();
        for (i, piece) in pieces.into_iter().enumerate() {
            if i + 1 < n {
                out.push(format!("{piece}{BPE_MARKER}"));
            } else {
                out.push(piece);
            }
        }
    }
    Sentence(out)
}

/// Join each run of `@@`-suffixed tokens with the token that follows it.
pub fn undo_bpe(sentence: &Sentence) -> Sentence {
    let mut out = Vec::with_capacity(sentence.len());
    let mut pending = String::new();
    for token in sentence.tokens() {
        match token.strip_suffix(BPE_MARKER) {
            Some(stem) => pending.push_str(stem),
            None => {
                pending.push_str(token);
                out.push(std::mem::take(&mut pending));
            }
        }
    }
    if !pending.is_empty() {
        log::debug!("dangling continuation marker at sentence end");
        out.push(pending);
    }
    Sentence(out)
}

#[derive(Debug, PartialEq, Eq)]
struct Candidate {
    count: i64,
    left: String,
    right: String,
    pair: (u32, u32),
}

impl Ord for Candidate {
    // Highest count first; among equal counts the lexicographically smallest pair.
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| (&other.left, &other.right).cmp(&(&self.left, &self.right)))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Learner {
    symbols: Vec<String>,
    symbol_ids: HashMap<String, u32>,
    words: Vec<Vec<u32>>,
    freqs: Vec<i64>,
    counts: HashMap<(u32, u32), i64>,
    locations: HashMap<(u32, u32), HashSet<usize>>,
    heap: BinaryHeap<Candidate>,
}

impl Learner {
    fn intern(&mut self, s: String) -> u32 {
        if let Some(&id) = self.symbol_ids.get(&s) {
            return id;
        }
        let id = self.symbols.len() as u32;
        self.symbol_ids.insert(s.clone(), id);
        self.symbols.push(s);
        id
    }

    fn push(&mut self, pair: (u32, u32)) {
        let count = self.counts.get(&pair).copied().unwrap_or(0);
        if count > 0 {
            self.heap.push(Candidate {
                count,
                left: self.symbols[pair.0 as usize].clone(),
                right: self.symbols[pair.1 as usize].clone(),
                pair,
            });
        }
    }

    fn add_word_pairs(&mut self, w: usize, sign: i64, touched: &mut HashSet<(u32, u32)>) {
        let f = self.freqs[w];
        for i in 1..self.words[w].len() {
            let pair = (self.words[w][i - 1], self.words[w][i]);
            *self.counts.entry(pair).or_insert(0) += sign * f;
            if sign > 0 {
                self.locations.entry(pair).or_default().insert(w);
            }
            touched.insert(pair);
        }
    }

    fn next_best(&mut self) -> Option<(u32, u32)> {
        while let Some(c) = self.heap.pop() {
            if self.counts.get(&c.pair).copied().unwrap_or(0) == c.count && c.count > 0 {
                return Some(c.pair);
            }
        }
        None
    }

    fn merge(&mut self, pair: (u32, u32)) {
        let new_symbol = format!("{}{}", self.symbols[pair.0 as usize], self.symbols[pair.1 as usize]);
        let new_id = self.intern(new_symbol);
        let mut affected: Vec<usize> = self.locations.remove(&pair).unwrap_or_default().into_iter().collect();
        affected.sort_unstable();
        let mut touched = HashSet::new();
        for w in affected {
            let word = &self.words[w];
            if !word.windows(2).any(|p| (p[0], p[1]) == pair) {
                continue;
            }
            self.add_word_pairs(w, -1, &mut touched);
            let word = &self.words[w];
            let mut merged = Vec::with_capacity(word.len());
            let mut i = 0;
            while i < word.len() {
                if i + 1 < word.len() && (word[i], word[i + 1]) == pair {
                    merged.push(new_id);
                    i += 2;
                } else {
                    merged.push(word[i]);
                    i += 1;
                }
            }
            self.words[w] = merged;
            self.add_word_pairs(w, 1, &mut touched);
        }
        let mut touched: Vec<_> = touched.into_iter().collect();
        touched.sort_unstable();
        for p in touched {
            self.push(p);
        }
    }
}

/// Learn up to `n_ops` merges from word frequencies. Always merges the most
/// frequent adjacent pair; ties go to the lexicographically smallest pair.
pub fn learn_bpe_from_words(word_counts: &BTreeMap<String, u64>, n_ops: usize) -> BpeModel {
    let mut learner = Learner {
        symbols: Vec::new(),
        symbol_ids: HashMap::new(),
        words: Vec::with_capacity(word_counts.len()),
        freqs: Vec::with_capacity(word_counts.len()),
        counts: HashMap::new(),
        locations: HashMap::new(),
        heap: BinaryHeap::new(),
    };
    for (word, &count) in word_counts {
        let ids = initial_symbols(word).into_iter().map(|s| learner.intern(s)).collect();
        learner.words.push(ids);
        learner.freqs.push(count as i64);
    }
    let mut touched = HashSet::new();
    for w in 0..learner.words.len() {
        learner.add_word_pairs(w, 1, &mut touched);
    }
    let mut touched: Vec<_> = touched.into_iter().collect();
    touched.sort_unstable();
    for p in touched {
        learner.push(p);
    }

    let mut merges = Vec::with_capacity(n_ops);
    while merges.len() < n_ops {
        let Some(pair) = learner.next_best() else { break };
        merges.push((
            learner.symbols[pair.0 as usize].clone(),
            learner.symbols[pair.1 as usize].clone(),
        ));
        learner.merge(pair);
    }
    BpeModel::from_merges(merges).expect("learned merges are unique")
}

/// Learn BPE over the concatenation of both sides of a parallel corpus.
pub fn learn_joint_bpe(source: &[Sentence], target: &[Sentence], n_ops: usize) -> BpeModel {
    let mut counts = BTreeMap::new();
    for s in source.iter().chain(target) {
        for w in s.tokens() {
            *counts.entry(w.clone()).or_insert(0u64) += 1;
        }
    }
    learn_bpe_from_words(&counts, n_ops)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(line: &str) -> Sentence {
        Sentence::from_line(line)
    }

    #[test]
    fn zero_ops_is_empty() {
        assert!(learn_joint_bpe(&[s("low lower")], &[], 0).is_empty());
        assert!(learn_joint_bpe(&[], &[], 10).is_empty());
    }

    #[test]
    fn split_without_merge() {
        let m = BpeModel::from_merges(vec![]).unwrap();
        assert_eq!(apply_bpe(&s("死海"), &m).to_line(), "死@@ 海");
        assert_eq!(apply_bpe(&s("abc d"), &m).to_line(), "a@@ b@@ c d");
    }

    #[test]
    fn merge_applies_across_word_end() {
        let m = BpeModel::from_merges(vec![("死".into(), "海</w>".into())]).unwrap();
        assert_eq!(apply_bpe(&s("死海 死海死"), &m).to_line(), "死海 死@@ 海@@ 死");
    }

    #[test]
    fn undo_examples() {
        assert_eq!(undo_bpe(&s("sym@@ metry")).to_line(), "symmetry");
        assert_eq!(undo_bpe(&s("a@@ b@@ c d")).to_line(), "abc d");
        assert_eq!(undo_bpe(&s("plain words")).to_line(), "plain words");
        assert_eq!(undo_bpe(&s("x y@@")).to_line(), "x y");
    }

    #[test]
    fn low_lower_first_merges() {
        let m = learn_joint_bpe(&[s("low low low lower")], &[], 2);
        // (l,o) and (o,w</w>)/(o,w) counts: l-o = 4, o-w</w> = 3, o-w = 1
        assert_eq!(m.merges()[0], ("l".to_string(), "o".to_string()));
        assert_eq!(m.merges()[1], ("lo".to_string(), "w</w>".to_string()));
    }

    #[test]
    fn model_text_round_trip() {
        let m = learn_joint_bpe(&[s("the thin thing that")], &[s("these those")], 6);
        let again = BpeModel::from_text(&m.to_text()).unwrap();
        assert_eq!(m, again);
        assert!(BpeModel::from_text("a\n").is_err());
        assert!(BpeModel::from_text("a b\na b\n").is_err());
    }
}
