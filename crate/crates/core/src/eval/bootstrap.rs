use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bleu::{corpus_bleu_from_stats, sentence_stats, Casing, SentenceStats};
use crate::seed::rng_for;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub samples: usize,
    pub level: f64,
    pub seed: u64,
    pub casing: Casing,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            samples: 1000,
            level: 0.05,
            seed: 1,
            casing: Casing::Insensitive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub score_a: f64,
    pub score_b: f64,
    /// Fraction of resamples on which the lower-scoring system wins or ties.
    pub p_value: f64,
    pub samples: usize,
    pub level: f64,
    pub significant: bool,
}

/// Paired bootstrap resampling over sentence indices. Sample `i` draws its
/// indices from a generator seeded by `(seed, i)`, so results do not depend on
/// the thread count.
pub fn bootstrap_significance<S: AsRef<str> + Sync>(
    hyp_a: &[S],
    hyp_b: &[S],
    refs: &[S],
    opts: BootstrapOptions,
) -> Result<SignificanceResult> {
    if hyp_a.len() != refs.len() || hyp_b.len() != refs.len() {
        return Err(Error::InvalidArgument(format!(
            "line counts differ: {} / {} hypotheses, {} references",
            hyp_a.len(),
            hyp_b.len(),
            refs.len()
        )));
    }
    if opts.samples == 0 {
        return Err(Error::InvalidArgument("bootstrap needs at least one sample".into()));
    }
    let stats = |hyps: &[S]| -> Vec<SentenceStats> {
        hyps.iter()
            .zip(refs)
            .map(|(h, r)| sentence_stats(h.as_ref(), r.as_ref(), opts.casing))
            .collect()
    };
    let sa = stats(hyp_a);
    let sb = stats(hyp_b);
    let total = |s: &[SentenceStats]| {
        let mut t = SentenceStats::default();
        s.iter().for_each(|x| t += *x);
        corpus_bleu_from_stats(&t).score
    };
    let score_a = total(&sa);
    let score_b = total(&sb);
    let n = refs.len();
    let p_value = if score_a == score_b || n == 0 {
        1.0
    } else {
        let a_lower = score_a < score_b;
        let lower_wins = (0..opts.samples)
            .into_par_iter()
            .filter(|&i| {
                let mut rng = rng_for(opts.seed, &format!("bootstrap/{i}"));
                let (mut ta, mut tb) = (SentenceStats::default(), SentenceStats::default());
                for _ in 0..n {
                    let k = rng.random_range(0..n);
                    ta += sa[k];
                    tb += sb[k];
                }
                let (a, b) = (corpus_bleu_from_stats(&ta).score, corpus_bleu_from_stats(&tb).score);
                if a_lower {
                    a >= b
                } else {
                    b >= a
                }
            })
            .count();
        lower_wins as f64 / opts.samples as f64
    };
    Ok(SignificanceResult {
        score_a,
        score_b,
        p_value,
        samples: opts.samples,
        level: opts.level,
        significant: p_value < opts.level,
    })
}

impl fmt::Display for SignificanceResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "system A: BLEU = {:.2}", self.score_a)?;
        writeln!(f, "system B: BLEU = {:.2}", self.score_b)?;
        write!(
            f,
            "p = {:.4} ({} samples); {} at level {}",
            self.p_value,
            self.samples,
            if self.significant { "significant" } else { "not significant" },
            self.level
        )
    }
}
