use std::collections::HashMap;
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Casing {
    #[default]
    Insensitive,
    Sensitive,
}

static SYMBOLS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"([\{-~\[-` -&\(-\+:-@/])").expect("valid regex"));
static PERIOD_COMMA_AFTER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"([^0-9])([\.,])").expect("valid regex"));
static PERIOD_COMMA_BEFORE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"([\.,])([^0-9])").expect("valid regex"));
static DASH_AFTER_DIGIT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"([0-9])(-)").expect("valid regex"));

/// The `13a` evaluation tokenizer: punctuation is split off, except periods
/// and commas between digits.
pub fn tokenize_13a(line: &str) -> Vec<String> {
    let mut s = line.replace("<skipped>", "").replace("-\n", "").replace('\n', " ");
    if s.contains('&') {
        s = s.replace("&quot;", "\"").replace("&amp;", "&").replace("&lt;", "<").replace("&gt;", ">");
    }
    let s = format!(" {s} ");
    let s = SYMBOLS.replace_all(&s, " $1 ");
    let s = PERIOD_COMMA_AFTER.replace_all(&s, "$1 $2 ");
    let s = PERIOD_COMMA_BEFORE.replace_all(&s, " $1 $2");
    let s = DASH_AFTER_DIGIT.replace_all(&s, "$1 $2 ");
    s.split_whitespace().map(str::to_string).collect()
}

/// Sufficient statistics of one hypothesis/reference pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SentenceStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl std::ops::AddAssign for SentenceStats {
    fn add_assign(&mut self, o: Self) {
        for n in 0..MAX_ORDER {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
    }
}

fn prepare(line: &str, casing: Casing) -> Vec<String> {
    match casing {
        Casing::Insensitive => tokenize_13a(&line.to_lowercase()),
        Casing::Sensitive => tokenize_13a(line),
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram statistics for one pair of raw lines.
pub fn sentence_stats(hyp: &str, reference: &str, casing: Casing) -> SentenceStats {
    let h = prepare(hyp, casing);
    let r = prepare(reference, casing);
    let mut stats = SentenceStats {
        hyp_len: h.len() as u64,
        ref_len: r.len() as u64,
        ..Default::default()
    };
    for n in 1..=MAX_ORDER {
        let hc = ngram_counts(&h, n);
        let rc = ngram_counts(&r, n);
        stats.totals[n - 1] = h.len().saturating_sub(n - 1) as u64;
        stats.matches[n - 1] = hc.iter().map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0))).sum();
    }
    stats
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    /// Corpus BLEU in `[0, 100]`.
    pub score: f64,
    /// Clipped n-gram precisions in percent, orders 1 to 4.
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: u64,
    pub ref_len: u64,
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
}

/// BLEU-4 with uniform weights and the standard brevity penalty; any zero
/// precision gives 0.
pub fn corpus_bleu_from_stats(s: &SentenceStats) -> BleuReport {
    let mut precisions = [0.0; MAX_ORDER];
    for (n, p) in precisions.iter_mut().enumerate() {
        if s.totals[n] > 0 {
            *p = 100.0 * s.matches[n] as f64 / s.totals[n] as f64;
        }
    }
    let brevity_penalty = if s.hyp_len == 0 {
        0.0
    } else if s.hyp_len > s.ref_len {
        1.0
    } else {
        (1.0 - s.ref_len as f64 / s.hyp_len as f64).exp()
    };
    let score = if s.matches.contains(&0) {
        0.0
    } else {
        let log_mean = (0..MAX_ORDER).map(|n| (s.matches[n] as f64 / s.totals[n] as f64).ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * brevity_penalty * log_mean.exp()
    };
    BleuReport {
        score,
        precisions,
        brevity_penalty,
        hyp_len: s.hyp_len,
        ref_len: s.ref_len,
        matches: s.matches,
        totals: s.totals,
    }
}

/// Corpus BLEU over aligned hypothesis and reference lines.
pub fn bleu<S: AsRef<str>, R: AsRef<str>>(hyps: &[S], refs: &[R], casing: Casing) -> Result<BleuReport> {
    if hyps.len() != refs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} hypotheses but {} references",
            hyps.len(),
            refs.len()
        )));
    }
    let mut total = SentenceStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        total += sentence_stats(h.as_ref(), r.as_ref(), casing);
    }
    Ok(corpus_bleu_from_stats(&total))
}

impl fmt::Display for BleuReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BLEU = {:.2} {:.1}/{:.1}/{:.1}/{:.1} (BP = {:.3} hyp_len = {} ref_len = {})",
            self.score,
            self.precisions[0],
            self.precisions[1],
            self.precisions[2],
            self.precisions[3],
            self.brevity_penalty,
            self.hyp_len,
            self.ref_len
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_punctuation_but_not_numbers() {
        assert_eq!(tokenize_13a("Hello, world!"), ["Hello", ",", "world", "!"]);
        assert_eq!(tokenize_13a("It costs 3,000.50 dollars."), ["It", "costs", "3,000.50", "dollars", "."]);
        assert_eq!(tokenize_13a("a (b) \"c\""), ["a", "(", "b", ")", "\"", "c", "\""]);
        assert_eq!(tokenize_13a("1990-1995"), ["1990", "-", "1995"]);
        assert_eq!(tokenize_13a("x &amp; y"), ["x", "&", "y"]);
    }

    #[test]
    fn identical_corpus_scores_100() {
        let lines = ["the cat sat on the mat", "a dog ran in the park today"];
        let r = bleu(&lines, &lines, Casing::Insensitive).unwrap();
        assert!((r.score - 100.0).abs() < 1e-9);
        assert_eq!(r.brevity_penalty, 1.0);
    }

    #[test]
    fn clipped_unigram_precision() {
        let r = bleu(&["the the the the"], &["the cat sat"], Casing::Insensitive).unwrap();
        assert_eq!(r.matches[0], 1);
        assert_eq!(r.totals[0], 4);
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn empty_input_scores_zero() {
        let empty: [&str; 0] = [];
        assert_eq!(bleu(&empty, &empty, Casing::Insensitive).unwrap().score, 0.0);
        assert_eq!(bleu(&[""], &["a b c d"], Casing::Insensitive).unwrap().score, 0.0);
    }

    #[test]
    fn casing_modes() {
        let h = ["The Cat Sat On The Mat"];
        let r = ["the cat sat on the mat"];
        assert!((bleu(&h, &r, Casing::Insensitive).unwrap().score - 100.0).abs() < 1e-9);
        assert!(bleu(&h, &r, Casing::Sensitive).unwrap().score < 100.0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(bleu(&["a"], &["a", "b"], Casing::Insensitive).is_err());
    }

    #[test]
    fn brevity_penalty_for_short_output() {
        let r = bleu(&["a b c d e"], &["a b c d e f g h i j"], Casing::Insensitive).unwrap();
        assert!((r.brevity_penalty - (-1.0f64).exp()).abs() < 1e-12);
        assert!((r.score - 100.0 * (-1.0f64).exp()).abs() < 1e-9);
    }
}
