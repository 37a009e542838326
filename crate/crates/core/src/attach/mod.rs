//! Dictionary matching, fusion and definition attachment.
//!
//! Matching runs on pre-BPE text against a training frequency table. Each
//! selected span is fused into one token; in BPE mode every other token is
//! then segmented while fused tokens stay whole. Definitions are attached to
//! fused tokens and carried as separate records, so the base token sequence
//! of the fuse-only and attach conditions is identical.

mod fusion;
mod matching;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dict::Dictionary;
use crate::error::{read_to_string, write_string};
use crate::textprep::{apply_bpe, BpeModel, ParallelCorpus, Sentence, Vocabulary, UNK};
use crate::{Error, Result};

pub use fusion::{defuse, defuse_token, fuse, fuse_tokens, validate_no_separator, Fused, FusionRecord, FUSION_SEPARATOR};
pub use matching::{find_matches, FrequencyTable, MatchSpan, Matcher, Threshold};

/// Longest attached definition, in (post-segmentation) tokens.
pub const MAX_DEFINITION_LEN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segmentation {
    Word,
    Bpe,
}

/// Which fused tokens receive definitions in word mode. BPE mode always
/// defines every fused token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttachScope {
    /// Only fused tokens that are out of vocabulary.
    Unknown,
    /// Every fused token.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttachOptions {
    pub segmentation: Segmentation,
    pub threshold: Threshold,
    /// Restrict matches to single-token headwords.
    pub single_word_only: bool,
    pub scope: AttachScope,
    /// When false, spans are fused but no definitions attached.
    pub attach_definitions: bool,
    pub max_definition_len: usize,
}

impl Default for AttachOptions {
    fn default() -> Self {
        AttachOptions {
            segmentation: Segmentation::Word,
            threshold: Threshold::Infinite,
            single_word_only: true,
            scope: AttachScope::Unknown,
            attach_definitions: true,
            max_definition_len: MAX_DEFINITION_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    /// Index of the anchor in `tokens`.
    pub pos: usize,
    /// The anchor's vocabulary form (`<unk>` when out of vocabulary).
    pub anchor: String,
    #[serde(rename = "def")]
    pub definition: Vec<String>,
}

/// Source tokens plus definitions attached to some of them. Tokens keep their
/// surface form; mapping to `<unk>` happens when the sentence is encoded.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AttachedSentence {
    pub tokens: Vec<String>,
    pub attachments: Vec<Attachment>,
}

impl AttachedSentence {
    pub fn plain(sentence: Sentence) -> Self {
        AttachedSentence {
            tokens: sentence.into_tokens(),
            attachments: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for a in &self.attachments {
            if a.pos >= self.tokens.len() {
                return Err(Error::InvalidArgument(format!("attachment position {} out of range", a.pos)));
            }
            if a.definition.is_empty() || a.definition.len() > MAX_DEFINITION_LEN {
                return Err(Error::InvalidArgument(format!("definition length {} outside 1..=50", a.definition.len())));
            }
            if !seen.insert(a.pos) {
                return Err(Error::InvalidArgument(format!("two attachments at position {}", a.pos)));
            }
        }
        Ok(())
    }

    pub fn base_sentence(&self) -> Sentence {
        Sentence::new(self.tokens.clone()).expect("attached tokens are valid")
    }
}

/// A source sentence after fusion (and BPE), before definitions are chosen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedSentence {
    pub tokens: Vec<String>,
    /// `(index in tokens, headword)` for every fused token.
    pub anchors: Vec<(usize, Vec<String>)>,
}

/// Shared read-only state for preparing a corpus.
pub struct Attacher<'a> {
    dict: &'a Dictionary,
    matcher: Matcher,
    freq: &'a FrequencyTable,
    bpe: Option<&'a BpeModel>,
    opts: AttachOptions,
}

impl<'a> Attacher<'a> {
    pub fn new(dict: &'a Dictionary, freq: &'a FrequencyTable, bpe: Option<&'a BpeModel>, opts: AttachOptions) -> Result<Self> {
        if opts.segmentation == Segmentation::Bpe && bpe.is_none() {
            return Err(Error::InvalidArgument("bpe segmentation needs a BPE model".into()));
        }
        if opts.max_definition_len == 0 || opts.max_definition_len > MAX_DEFINITION_LEN {
            return Err(Error::InvalidArgument(format!(
                "max definition length must be in 1..={MAX_DEFINITION_LEN}"
            )));
        }
        Ok(Attacher {
            dict,
            matcher: Matcher::new(dict),
            freq,
            bpe,
            opts,
        })
    }

    /// Match, fuse and (in BPE mode) segment the non-fused tokens.
    pub fn prepare(&self, sentence: &Sentence) -> Result<PreparedSentence> {
        let spans = self.matcher.find(sentence, self.freq, self.opts.threshold, self.opts.single_word_only);
        let fused = fuse(sentence, &spans)?;
        match (self.opts.segmentation, self.bpe) {
            (Segmentation::Bpe, Some(bpe)) => {
                let mut tokens = Vec::new();
                let mut anchors = Vec::with_capacity(fused.records.len());
                let mut records = fused.records.iter().peekable();
                for (i, tok) in fused.sentence.tokens().iter().enumerate() {
                    if let Some(rec) = records.next_if(|r| r.position == i) {
                        anchors.push((tokens.len(), rec.headword.clone()));
                        tokens.push(tok.clone());
                    } else {
                        tokens.extend(apply_bpe(&Sentence::from_line(tok), bpe).into_tokens());
                    }
                }
                Ok(PreparedSentence { tokens, anchors })
            }
            _ => Ok(PreparedSentence {
                anchors: fused.records.iter().map(|r| (r.position, r.headword.clone())).collect(),
                tokens: fused.sentence.into_tokens(),
            }),
        }
    }

    fn definition(&self, headword: &[String]) -> Vec<String> {
        let entry = self.dict.get(headword).expect("matched headwords come from the dictionary");
        let mut def = match (self.opts.segmentation, self.bpe) {
            (Segmentation::Bpe, Some(bpe)) => apply_bpe(&Sentence::new(entry.definition.clone()).expect("valid"), bpe).into_tokens(),
            _ => entry.definition.clone(),
        };
        def.truncate(self.opts.max_definition_len);
        def
    }

    /// Choose which fused tokens get definitions, given the model vocabulary.
    pub fn attach(&self, prepared: PreparedSentence, vocab: &Vocabulary) -> AttachedSentence {
        let mut attachments = Vec::new();
        if self.opts.attach_definitions {
            for (pos, headword) in &prepared.anchors {
                let anchor = vocab.vocab_form(&prepared.tokens[*pos]);
                let wanted = match self.opts.segmentation {
                    Segmentation::Bpe => true,
                    Segmentation::Word => self.opts.scope == AttachScope::All || anchor == UNK,
                };
                if wanted {
                    attachments.push(Attachment {
                        pos: *pos,
                        anchor: anchor.to_string(),
                        definition: self.definition(headword),
                    });
                }
            }
        }
        AttachedSentence {
            tokens: prepared.tokens,
            attachments,
        }
    }
}

/// Fuse matched spans and attach truncated definitions to a corpus side.
pub fn make_attached_corpus(
    sentences: &[Sentence],
    dict: &Dictionary,
    freq: &FrequencyTable,
    vocab: &Vocabulary,
    bpe: Option<&BpeModel>,
    opts: AttachOptions,
) -> Result<Vec<AttachedSentence>> {
    validate_no_separator(sentences)?;
    let attacher = Attacher::new(dict, freq, bpe, opts)?;
    sentences
        .iter()
        .map(|s| attacher.prepare(s).map(|p| attacher.attach(p, vocab)))
        .collect()
}

/// The fuse-only ablation: same tokens as [`make_attached_corpus`], no definitions.
pub fn make_fuse_only_corpus(
    sentences: &[Sentence],
    dict: &Dictionary,
    freq: &FrequencyTable,
    vocab: &Vocabulary,
    bpe: Option<&BpeModel>,
    opts: AttachOptions,
) -> Result<Vec<AttachedSentence>> {
    make_attached_corpus(
        sentences,
        dict,
        freq,
        vocab,
        bpe,
        AttachOptions {
            attach_definitions: false,
            ..opts
        },
    )
}

/// One parallel pair per dictionary entry: headword → definition.
pub fn make_append_corpus(dict: &Dictionary) -> ParallelCorpus {
    let (source, target) = dict
        .iter()
        .map(|e| {
            (
                Sentence::new(e.headword.clone()).expect("valid"),
                Sentence::new(e.definition.clone()).expect("valid"),
            )
        })
        .unzip();
    ParallelCorpus { source, target }
}

/// Attached sentences as JSON lines, one compact object per line.
pub fn to_jsonl(sentences: &[AttachedSentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&serde_json::to_string(s).expect("serializable"));
        out.push('\n');
    }
    out
}

pub fn from_jsonl(text: &str) -> Result<Vec<AttachedSentence>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let s: AttachedSentence = serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            s.validate().map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            Ok(s)
        })
        .collect()
}

pub fn write_jsonl(path: &Path, sentences: &[AttachedSentence]) -> Result<()> {
    write_string(path, &to_jsonl(sentences))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<AttachedSentence>> {
    from_jsonl(&read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dict::DictEntry;
    use crate::textprep::build_vocab;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn figure_one() -> (Dictionary, Sentence, ParallelCorpus) {
        let mut d = Dictionary::new("t");
        d.insert(DictEntry::new(toks("死海"), toks("the Dead Sea")).unwrap());
        let sentence = Sentence::from_line("大家 都 知道 死海 正在 死亡");
        let train = ParallelCorpus::new(
            vec![Sentence::from_line("大家 都 知道 正在 死亡")],
            vec![Sentence::from_line("everyone knows it is dying")],
        )
        .unwrap();
        (d, sentence, train)
    }

    #[test]
    fn figure_one_word_mode() {
        let (d, sentence, train) = figure_one();
        let freq = FrequencyTable::from_sentences(&train.source, &d);
        let vocab = build_vocab(&train, 100).unwrap();
        let opts = AttachOptions {
            threshold: Threshold::Count(5),
            ..Default::default()
        };
        let out = make_attached_corpus(std::slice::from_ref(&sentence), &d, &freq, &vocab, None, opts).unwrap();
        assert_eq!(out[0].tokens, sentence.tokens());
        assert_eq!(out[0].attachments.len(), 1);
        let a = &out[0].attachments[0];
        // index 3 is the fourth token, PE position 4
        assert_eq!(a.pos, 3);
        assert_eq!(a.anchor, UNK);
        assert_eq!(a.definition, toks("the Dead Sea"));

        let fused = make_fuse_only_corpus(&[sentence], &d, &freq, &vocab, None, opts).unwrap();
        assert_eq!(fused[0].tokens, out[0].tokens);
        assert!(fused[0].attachments.is_empty());
        assert_eq!(vocab.vocab_form(&fused[0].tokens[3]), UNK);
    }

    #[test]
    fn in_vocabulary_anchor_only_defined_with_all_scope() {
        let (d, sentence, _) = figure_one();
        let train = ParallelCorpus::new(vec![sentence.clone()], vec![Sentence::from_line("x")]).unwrap();
        let freq = FrequencyTable::default();
        let vocab = build_vocab(&train, 100).unwrap();
        let unk_only = make_attached_corpus(std::slice::from_ref(&sentence), &d, &freq, &vocab, None, AttachOptions::default()).unwrap();
        assert!(unk_only[0].attachments.is_empty());
        let all = AttachOptions {
            scope: AttachScope::All,
            ..Default::default()
        };
        let out = make_attached_corpus(&[sentence], &d, &freq, &vocab, None, all).unwrap();
        assert_eq!(out[0].attachments[0].anchor, "死海");
    }

    #[test]
    fn bpe_mode_fuses_and_segments_definition() {
        let mut d = Dictionary::new("t");
        d.insert(DictEntry::new(toks("火 药"), toks("gunpowder")).unwrap());
        let bpe = BpeModel::from_merges(vec![("g".into(), "u".into()), ("gu".into(), "n".into())]).unwrap();
        let sentence = Sentence::from_line("我们 做 了 火 药 。");
        let train = ParallelCorpus::new(vec![Sentence::from_line("我们")], vec![Sentence::from_line("we")]).unwrap();
        let vocab = build_vocab(&train, 100).unwrap();
        let opts = AttachOptions {
            segmentation: Segmentation::Bpe,
            single_word_only: false,
            ..Default::default()
        };
        let out = make_attached_corpus(&[sentence], &d, &FrequencyTable::default(), &vocab, Some(&bpe), opts).unwrap();
        let s = &out[0];
        let fused = fuse_tokens(&toks("火 药"));
        let pos = s.tokens.iter().position(|t| *t == fused).unwrap();
        assert_eq!(s.attachments[0].pos, pos);
        assert_eq!(s.attachments[0].anchor, UNK);
        assert_eq!(s.attachments[0].definition[0], "gun@@");
        // non-fused tokens were segmented
        assert!(s.tokens.contains(&"我@@".to_string()));
        assert!(Attacher::new(&d, &FrequencyTable::default(), None, opts).is_err());
    }

    #[test]
    fn long_definitions_truncate_to_fifty() {
        let mut d = Dictionary::new("t");
        let long: Vec<String> = (0..107).map(|i| format!("w{i}")).collect();
        d.insert(DictEntry::new(toks("长"), long).unwrap());
        let vocab = build_vocab(&ParallelCorpus::default(), 10).unwrap();
        let out = make_attached_corpus(&[Sentence::from_line("长")], &d, &FrequencyTable::default(), &vocab, None, AttachOptions::default()).unwrap();
        assert_eq!(out[0].attachments[0].definition.len(), 50);
        assert_eq!(out[0].attachments[0].definition[49], "w49");
    }

    #[test]
    fn append_corpus_maps_entries_to_pairs() {
        let (d, _, _) = figure_one();
        let c = make_append_corpus(&d);
        assert_eq!(c.len(), 1);
        assert_eq!(c.source[0].to_line(), "死海");
        assert_eq!(c.target[0].to_line(), "the Dead Sea");
    }

    #[test]
    fn no_matches_leaves_sentence_unchanged() {
        let (d, _, _) = figure_one();
        let vocab = build_vocab(&ParallelCorpus::default(), 10).unwrap();
        let s = Sentence::from_line("nothing to see");
        let out = make_attached_corpus(std::slice::from_ref(&s), &d, &FrequencyTable::default(), &vocab, None, AttachOptions::default()).unwrap();
        assert_eq!(out[0], AttachedSentence::plain(s));
    }

    #[test]
    fn jsonl_is_bit_exact() {
        let s = AttachedSentence {
            tokens: toks("大家 都 知道 <unk>"),
            attachments: vec![Attachment {
                pos: 3,
                anchor: UNK.into(),
                definition: toks("the \"Dead\" Sea"),
            }],
        };
        let text = to_jsonl(&[s.clone(), AttachedSentence::default()]);
        assert!(text.starts_with(r#"{"tokens":["大家","都","知道","<unk>"],"attachments":[{"pos":3,"anchor":"<unk>","def":["the","\"Dead\"","Sea"]}]}"#));
        let back = from_jsonl(&text).unwrap();
        assert_eq!(back[0], s);
        assert_eq!(to_jsonl(&back), text);
        assert!(from_jsonl(r#"{"tokens":["a"],"attachments":[{"pos":4,"anchor":"a","def":["x"]}]}"#).is_err());
    }
}
