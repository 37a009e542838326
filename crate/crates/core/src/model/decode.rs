//! Greedy and beam-search decoding with cross-attention export.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::tensor::Matrix;
use super::transformer::TransformerModel;
use crate::textprep::{BOS_ID, EOS_ID};
use crate::{Error, Result, Scalar};

pub const DEFAULT_BEAM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeOptions {
    pub beam: usize,
    /// Output length limit, excluding `</s>`. Defaults to `2·source + 10`,
    /// capped by the model's maximum length.
    pub max_len: Option<usize>,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            beam: DEFAULT_BEAM,
            max_len: None,
        }
    }
}

impl DecodeOptions {
    pub fn greedy() -> Self {
        DecodeOptions {
            beam: 1,
            max_len: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    /// Output ids without `</s>`.
    pub tokens: Vec<u32>,
    /// Total log-probability, including `</s>` when finished.
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Log-probability per predicted token (`</s>` counts as one).
    pub fn score(&self) -> f64 {
        let n = self.tokens.len() + usize::from(self.finished);
        if n == 0 {
            0.0
        } else {
            self.log_prob / n as f64
        }
    }
}

/// Cross-attention weights for one decoded sentence: `layers[l][h]` has one
/// row per predicted token (including `</s>`) and one column per source row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub source: Vec<String>,
    pub target: Vec<String>,
    pub layers: Vec<Vec<Vec<Vec<f64>>>>,
}

fn sort_desc(a: f64, b: f64) -> std::cmp::Ordering {
    b.partial_cmp(&a).unwrap_or(std::cmp::Ordering::Equal)
}

/// Decode an encoded source. `beam = 1` is greedy.
pub fn decode<T: Scalar>(model: &TransformerModel<T>, source: &Matrix<T>, opts: DecodeOptions) -> Result<Hypothesis> {
    if opts.beam == 0 {
        return Err(Error::InvalidArgument("beam size must be at least 1".into()));
    }
    let memory = model.encode(source)?;
    let limit = opts
        .max_len
        .unwrap_or(2 * source.rows() + 10)
        .min(model.config.max_len.saturating_sub(1));
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        finished: false,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..=limit {
        let mut candidates: Vec<(f64, usize, u32)> = Vec::new();
        for (b, hyp) in live.iter().enumerate() {
            let mut prefix = Vec::with_capacity(hyp.tokens.len() + 1);
            prefix.push(BOS_ID);
            prefix.extend_from_slice(&hyp.tokens);
            let dist = model.next_distribution(&memory, &prefix)?;
            let mut ranked: Vec<(f64, u32)> = dist.iter().enumerate().map(|(i, p)| (p.as_f64().ln(), i as u32)).collect();
            ranked.sort_by(|a, b| sort_desc(a.0, b.0).then(a.1.cmp(&b.1)));
            let at_limit = hyp.tokens.len() >= limit;
            for &(lp, tok) in ranked.iter().filter(|(_, t)| !at_limit || *t == EOS_ID).take(opts.beam) {
                candidates.push((hyp.log_prob + lp, b, tok));
            }
        }
        candidates.sort_by(|a, b| sort_desc(a.0, b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut next = Vec::with_capacity(opts.beam);
        for (lp, b, tok) in candidates.into_iter().take(opts.beam) {
            let mut tokens = live[b].tokens.clone();
            if tok == EOS_ID {
                finished.push(Hypothesis {
                    tokens,
                    log_prob: lp,
                    finished: true,
                });
            } else {
                tokens.push(tok);
                next.push(Hypothesis {
                    tokens,
                    log_prob: lp,
                    finished: false,
                });
            }
        }
        live = next;
        if live.is_empty() || finished.len() >= opts.beam {
            break;
        }
    }
    let pool = if finished.is_empty() { live } else { finished };
    let best = pool
        .into_iter()
        .enumerate()
        .max_by(|(i, a), (j, b)| a.score().partial_cmp(&b.score()).unwrap_or(std::cmp::Ordering::Equal).then(j.cmp(i)))
        .map(|(_, h)| h)
        .expect("at least one hypothesis");
    Ok(best)
}

/// Cross-attention of every decoder layer while forcing `output`.
pub fn cross_attention<T: Scalar>(model: &TransformerModel<T>, source: &Matrix<T>, output: &[u32]) -> Result<Vec<Vec<Matrix<f64>>>> {
    let memory = model.encode(source)?;
    let mut prefix = vec![BOS_ID];
    prefix.extend_from_slice(output);
    let cache = model.run_decoder(&prefix, &memory, &mut None)?;
    Ok(cache
        .cross_attention()
        .into_iter()
        .map(|heads| heads.into_iter().map(|m| m.cast::<f64>()).collect())
        .collect())
}

impl AttentionRecord {
    pub fn new(source: Vec<String>, target: Vec<String>, weights: &[Vec<Matrix<f64>>]) -> Self {
        let layers = weights
            .iter()
            .map(|heads| {
                heads
                    .iter()
                    .map(|m| (0..m.rows()).map(|i| m.row(i).to_vec()).collect())
                    .collect()
            })
            .collect();
        AttentionRecord { source, target, layers }
    }

    /// Heatmap of one head as a standalone SVG: source rows on the x axis,
    /// output tokens on the y axis, darker cells for larger weights.
    pub fn to_svg(&self, layer: usize, head: usize) -> Result<String> {
        let m = self
            .layers
            .get(layer)
            .and_then(|l| l.get(head))
            .ok_or_else(|| Error::InvalidArgument(format!("no attention for layer {layer} head {head}")))?;
        let cell = 24.0;
        let margin = 110.0;
        let cols = m.first().map_or(0, Vec::len);
        let width = margin + cell * cols as f64 + 10.0;
        let height = margin + cell * m.len() as f64 + 10.0;
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
        for (j, tok) in self.source.iter().enumerate().take(cols) {
            let x = margin + cell * (j as f64 + 0.5);
            let _ = writeln!(
                svg,
                r#"<text x="{x}" y="{y}" transform="rotate(-60 {x} {y})">{}</text>"#,
                escape(tok),
                y = margin - 6.0
            );
        }
        for (i, row) in m.iter().enumerate() {
            let y = margin + cell * i as f64;
            let label = self.target.get(i).map_or("", String::as_str);
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                margin - 6.0,
                y + cell * 0.65,
                escape(label)
            );
            for (j, &w) in row.iter().enumerate() {
                let shade = (255.0 * (1.0 - w.clamp(0.0, 1.0))).round() as u8;
                let _ = writeln!(
                    svg,
                    r##"<rect x="{}" y="{y}" width="{cell}" height="{cell}" fill="rgb({shade},{shade},{shade})" stroke="#ddd"/>"##,
                    margin + cell * j as f64
                );
            }
        }
        svg.push_str("</svg>\n");
        Ok(svg)
    }
}

pub(crate) fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
