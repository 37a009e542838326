//! Joining matched spans into single tokens.

use serde::{Deserialize, Serialize};

use crate::textprep::Sentence;
use crate::{Error, Result};

use super::MatchSpan;

/// Joins the parts of a fused token. Corpora must not contain it.
pub const FUSION_SEPARATOR: char = '\u{2581}';

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionRecord {
    pub fused: String,
    pub original: Vec<String>,
    pub headword: Vec<String>,
    /// Index of the fused token in the fused sentence.
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fused {
    pub sentence: Sentence,
    pub records: Vec<FusionRecord>,
    /// `position_map[old] = new` for every original token index.
    pub position_map: Vec<usize>,
}

pub fn fuse_tokens(tokens: &[String]) -> String {
    let mut sep = [0u8; 4];
    tokens.join(FUSION_SEPARATOR.encode_utf8(&mut sep))
}

/// Split a token back into the tokens it was fused from.
pub fn defuse_token(token: &str) -> Vec<String> {
    token.split(FUSION_SEPARATOR).map(str::to_string).collect()
}

/// Defuse every token of a sentence.
pub fn defuse(sentence: &Sentence) -> Sentence {
    let tokens = sentence.tokens().iter().flat_map(|t| defuse_token(t)).collect();
    Sentence::new(tokens).expect("defused tokens stay valid")
}

/// Reject corpora that already contain the fusion separator.
pub fn validate_no_separator<'a>(sentences: impl IntoIterator<Item = &'a Sentence>) -> Result<()> {
    for (i, s) in sentences.into_iter().enumerate() {
        if s.tokens().iter().any(|t| t.contains(FUSION_SEPARATOR)) {
            return Err(Error::InvalidArgument(format!(
                "sentence {} contains the reserved fusion separator U+2581",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Fuse each span into one token. Spans must be sorted, non-overlapping and
/// inside the sentence.
pub fn fuse(sentence: &Sentence, spans: &[MatchSpan]) -> Result<Fused> {
    let tokens = sentence.tokens();
    let mut prev_end = 0;
    for span in spans {
        if span.start < prev_end || span.start >= span.end || span.end > tokens.len() {
            return Err(Error::Overlap(format!(
                "span {}..{} after {} in a sentence of {} tokens",
                span.start,
                span.end,
                prev_end,
                tokens.len()
            )));
        }
        prev_end = span.end;
    }

    let mut out = Vec::with_capacity(tokens.len());
    let mut records = Vec::with_capacity(spans.len());
    let mut position_map = vec![0; tokens.len()];
    let mut spans = spans.iter().peekable();
    let mut i = 0;
    while i < tokens.len() {
        if let Some(span) = spans.next_if(|s| s.start == i) {
            let original = tokens[span.start..span.end].to_vec();
            let fused = fuse_tokens(&original);
            for slot in &mut position_map[span.start..span.end] {
                *slot = out.len();
            }
            records.push(FusionRecord {
                fused: fused.clone(),
                original,
                headword: span.headword.clone(),
                position: out.len(),
            });
            out.push(fused);
            i = span.end;
        } else {
            position_map[i] = out.len();
            out.push(tokens[i].clone());
            i += 1;
        }
    }
    Ok(Fused {
        sentence: Sentence::new(out)?,
        records,
        position_map,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(start: usize, end: usize, s: &Sentence) -> MatchSpan {
        MatchSpan {
            start,
            end,
            headword: s.tokens()[start..end].to_vec(),
        }
    }

    #[test]
    fn fuses_multiword_span() {
        let s = Sentence::from_line("大家 都 知道 死 海 正在 死亡");
        let f = fuse(&s, &[span(3, 5, &s)]).unwrap();
        assert_eq!(f.sentence.len(), 6);
        assert_eq!(f.sentence.tokens()[3], "死\u{2581}海");
        assert_eq!(f.records[0].position, 3);
        assert_eq!(f.position_map, vec![0, 1, 2, 3, 3, 4, 5]);
        assert_eq!(defuse(&f.sentence), s);
    }

    #[test]
    fn no_spans_is_identity() {
        let s = Sentence::from_line("a b c");
        let f = fuse(&s, &[]).unwrap();
        assert_eq!(f.sentence, s);
        assert_eq!(f.position_map, vec![0, 1, 2]);
    }

    #[test]
    fn adjacent_single_token_spans_keep_order() {
        let s = Sentence::from_line("a b c");
        let f = fuse(&s, &[span(0, 1, &s), span(1, 2, &s)]).unwrap();
        assert_eq!(f.sentence, s);
        assert_eq!(f.records.iter().map(|r| r.position).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn overlapping_spans_rejected() {
        let s = Sentence::from_line("a b c");
        assert!(matches!(fuse(&s, &[span(0, 2, &s), span(1, 3, &s)]), Err(Error::Overlap(_))));
        assert!(fuse(&s, &[span(1, 2, &s), span(0, 1, &s)]).is_err());
    }

    #[test]
    fn separator_validation() {
        assert!(validate_no_separator(&[Sentence::from_line("a\u{2581}b")]).is_err());
        assert!(validate_no_separator(&[Sentence::from_line("a b")]).is_ok());
    }
}
