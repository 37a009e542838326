//! The four system conditions end to end: prepare, train, translate, score.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Condition, ExperimentConfig};
use crate::attach::{
    make_append_corpus, read_jsonl, validate_no_separator, write_jsonl, AttachedSentence, Attacher, FrequencyTable, PreparedSentence,
    Segmentation, Threshold,
};
use crate::dict::Dictionary;
use crate::encoding::SourceLayout;
use crate::error::{read_to_string, write_string};
use crate::eval::{bleu, BleuReport, Casing};
use crate::model::{checkpoint, decode, train, DecodeOptions, Example, TrainReport, TransformerModel};
use crate::textprep::{
    apply_bpe, build_vocab, learn_joint_bpe, read_sentences, undo_bpe, write_sentences, BpeModel, ParallelCorpus, Sentence, Vocabulary,
};
use crate::{Error, Result, Scalar};

/// Everything the trainer and translator need, after condition-specific
/// preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub vocab: Vocabulary,
    pub bpe: Option<BpeModel>,
    pub train_source: Vec<AttachedSentence>,
    /// Training targets after segmentation.
    pub train_target: Vec<Sentence>,
    pub dev_source: Vec<AttachedSentence>,
    /// Dev references as given.
    pub dev_reference: Vec<Sentence>,
    pub test_source: Vec<AttachedSentence>,
    pub test_reference: Vec<Sentence>,
}

fn segment(sentences: &[Sentence], bpe: Option<&BpeModel>) -> Vec<Sentence> {
    match bpe {
        Some(m) => sentences.iter().map(|s| apply_bpe(s, m)).collect(),
        None => sentences.to_vec(),
    }
}

fn read_corpus(source: &Path, target: &Path) -> Result<ParallelCorpus> {
    ParallelCorpus::read(source, target)
}

/// Apply the configured condition to the training, dev and test corpora.
pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedData> {
    cfg.validate_inputs()?;
    let train_plain = read_corpus(&cfg.train_source, &cfg.train_target)?;
    let dev = read_corpus(&cfg.dev_source, &cfg.dev_target)?;
    let test = read_corpus(&cfg.test_source, &cfg.test_target)?;
    let dict = match &cfg.dictionary {
        Some(p) => Some(Dictionary::read_tsv(p)?),
        None => None,
    };
    let bpe = match cfg.segmentation {
        Segmentation::Bpe => Some(learn_joint_bpe(&train_plain.source, &train_plain.target, cfg.bpe_ops)),
        Segmentation::Word => None,
    };

    let mut train = train_plain.clone();
    if cfg.condition == Condition::Append {
        let extra = make_append_corpus(dict.as_ref().expect("validated"));
        log::info!("appending {} dictionary pairs", extra.len());
        train.extend(extra);
    }
    let train_target = segment(&train.target, bpe.as_ref());

    let (vocab, train_source, dev_source, test_source) = match cfg.condition {
        Condition::Baseline | Condition::Append => {
            let src = segment(&train.source, bpe.as_ref());
            let vocab = build_vocab(&ParallelCorpus::new(src.clone(), train_target.clone())?, cfg.vocab_size)?;
            let plain = |s: Vec<Sentence>| s.into_iter().map(AttachedSentence::plain).collect::<Vec<_>>();
            let dv = plain(segment(&dev.source, bpe.as_ref()));
            let te = plain(segment(&test.source, bpe.as_ref()));
            (vocab, plain(src), dv, te)
        }
        Condition::Fuse | Condition::Attach => {
            let dict = dict.as_ref().expect("validated");
            for side in [&train.source, &dev.source, &test.source] {
                validate_no_separator(side)?;
            }
            let freq = FrequencyTable::from_sentences(&train_plain.source, dict);
            let attacher = Attacher::new(dict, &freq, bpe.as_ref(), cfg.attach_options())?;
            let prep = |s: &[Sentence]| s.iter().map(|x| attacher.prepare(x)).collect::<Result<Vec<_>>>();
            let train_prep = prep(&train.source)?;
            let fused: Vec<Sentence> = train_prep
                .iter()
                .map(|p| Sentence::new(p.tokens.clone()))
                .collect::<Result<_>>()?;
            let vocab = build_vocab(&ParallelCorpus::new(fused, train_target.clone())?, cfg.vocab_size)?;
            let attach_all = |ps: Vec<PreparedSentence>| ps.into_iter().map(|p| attacher.attach(p, &vocab)).collect::<Vec<_>>();
            let tr = attach_all(train_prep);
            let dv = attach_all(prep(&dev.source)?);
            let te = attach_all(prep(&test.source)?);
            (vocab, tr, dv, te)
        }
    };
    Ok(PreparedData {
        vocab,
        bpe,
        train_source,
        train_target,
        dev_source,
        dev_reference: dev.target,
        test_source,
        test_reference: test.target,
    })
}

impl PreparedData {
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.vocab.write(&dir.join("vocab.tsv"))?;
        if let Some(bpe) = &self.bpe {
            bpe.write(&dir.join("bpe.codes"))?;
        }
        write_jsonl(&dir.join("train.src.jsonl"), &self.train_source)?;
        write_sentences(&dir.join("train.tgt"), &self.train_target)?;
        write_jsonl(&dir.join("dev.src.jsonl"), &self.dev_source)?;
        write_sentences(&dir.join("dev.ref"), &self.dev_reference)?;
        write_jsonl(&dir.join("test.src.jsonl"), &self.test_source)?;
        write_sentences(&dir.join("test.ref"), &self.test_reference)?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let bpe_path = dir.join("bpe.codes");
        Ok(PreparedData {
            vocab: Vocabulary::read(&dir.join("vocab.tsv"))?,
            bpe: if bpe_path.is_file() { Some(BpeModel::read(&bpe_path)?) } else { None },
            train_source: read_jsonl(&dir.join("train.src.jsonl"))?,
            train_target: read_sentences(&dir.join("train.tgt"))?,
            dev_source: read_jsonl(&dir.join("dev.src.jsonl"))?,
            dev_reference: read_sentences(&dir.join("dev.ref"))?,
            test_source: read_jsonl(&dir.join("test.src.jsonl"))?,
            test_reference: read_sentences(&dir.join("test.ref"))?,
        })
    }

    pub fn attachment_count(&self) -> usize {
        self.train_source.iter().map(|s| s.attachments.len()).sum()
    }
}

/// Training pairs as ids. Pairs with an empty side or longer than the model
/// allows are skipped.
pub fn examples(sources: &[AttachedSentence], targets: &[Sentence], vocab: &Vocabulary, max_len: usize) -> Result<Vec<Example>> {
    if sources.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} sources but {} targets",
            sources.len(),
            targets.len()
        )));
    }
    let mut out = Vec::with_capacity(sources.len());
    let mut skipped = 0;
    for (s, t) in sources.iter().zip(targets) {
        if s.tokens.is_empty() || t.is_empty() || s.tokens.len() > max_len || t.len() + 1 > max_len {
            skipped += 1;
            continue;
        }
        out.push(Example {
            source: SourceLayout::from_attached(s, vocab, max_len)?,
            target: vocab.encode(t),
        });
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} training pairs that are empty or too long");
    }
    Ok(out)
}

/// Translate attached sentences; BPE markers are removed from the output.
pub fn translate<T: Scalar>(
    model: &TransformerModel<T>,
    vocab: &Vocabulary,
    sources: &[AttachedSentence],
    opts: DecodeOptions,
) -> Result<Vec<Sentence>> {
    sources
        .iter()
        .map(|s| {
            if s.tokens.is_empty() {
                return Ok(Sentence::default());
            }
            let layout = SourceLayout::from_attached(s, vocab, model.config.max_len)?;
            let x = model.embed_source(&layout)?;
            let hyp = decode(model, &x, opts)?;
            let tokens = Sentence::new(vocab.decode(&hyp.tokens))?;
            Ok(undo_bpe(&tokens))
        })
        .collect()
}

pub fn score(hyps: &[Sentence], refs: &[Sentence], casing: Casing) -> Result<BleuReport> {
    let h: Vec<String> = hyps.iter().map(Sentence::to_line).collect();
    let r: Vec<String> = refs.iter().map(Sentence::to_line).collect();
    bleu(&h, &r, casing)
}

/// One rare-word occurrence with its expected translation at the aligned position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    /// 0-based line index.
    pub line: usize,
    /// 0-based token index in both source and target.
    pub position: usize,
    pub source: String,
    pub expected: String,
}

pub fn lexicon_to_text(entries: &[LexiconEntry]) -> String {
    entries
        .iter()
        .map(|e| format!("{}\t{}\t{}\t{}\n", e.line, e.position, e.source, e.expected))
        .collect()
}

pub fn lexicon_from_text(text: &str) -> Result<Vec<LexiconEntry>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = || Error::Parse {
                line: i + 1,
                message: format!("expected `line<TAB>position<TAB>source<TAB>expected`, got {l:?}"),
            };
            let f: Vec<&str> = l.split('\t').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(LexiconEntry {
                line: f[0].parse().map_err(|_| bad())?,
                position: f[1].parse().map_err(|_| bad())?,
                source: f[2].to_string(),
                expected: f[3].to_string(),
            })
        })
        .collect()
}

pub fn read_lexicon(path: &Path) -> Result<Vec<LexiconEntry>> {
    lexicon_from_text(&read_to_string(path)?)
}

pub fn write_lexicon(path: &Path, entries: &[LexiconEntry]) -> Result<()> {
    write_string(path, &lexicon_to_text(entries))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RareWordAccuracy {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// Fraction of lexicon entries whose expected word appears at the aligned
/// position of the hypothesis.
pub fn rare_word_accuracy(hyps: &[Sentence], lexicon: &[LexiconEntry]) -> RareWordAccuracy {
    let correct = lexicon
        .iter()
        .filter(|e| hyps.get(e.line).and_then(|h| h.tokens().get(e.position)) == Some(&e.expected))
        .count();
    RareWordAccuracy {
        correct,
        total: lexicon.len(),
        accuracy: if lexicon.is_empty() { 0.0 } else { correct as f64 / lexicon.len() as f64 },
    }
}

/// Summary of one run, written as `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub condition: Condition,
    pub threshold: Threshold,
    pub seed: u64,
    pub vocab_size: usize,
    pub train_pairs: usize,
    pub train_attachments: usize,
    pub training: TrainReport,
    pub dev_bleu: BleuReport,
    pub test_bleu: BleuReport,
    pub dev_rare_words: Option<RareWordAccuracy>,
    pub test_rare_words: Option<RareWordAccuracy>,
}

/// Train on prepared data. Per-epoch dev BLEU comes from greedy decoding;
/// the best epoch's parameters are returned.
pub fn train_model(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    out_dir: Option<&Path>,
) -> Result<(TransformerModel<f32>, TrainReport)> {
    let mcfg = cfg.model_config();
    let train_examples = examples(&data.train_source, &data.train_target, &data.vocab, mcfg.max_len)?;
    let mut model = TransformerModel::<f32>::new(mcfg, data.vocab.len())?;
    log::info!(
        "training {} pairs, vocabulary {}, {} parameters",
        train_examples.len(),
        data.vocab.len(),
        model.parameter_count()
    );
    let vocab_hash = data.vocab.content_hash();
    let report = train(&mut model, &train_examples, &cfg.training, |epoch, m| {
        let hyps = translate(m, &data.vocab, &data.dev_source, DecodeOptions::greedy())?;
        let dev = score(&hyps, &data.dev_reference, cfg.casing)?;
        if let (Some(dir), true) = (out_dir, cfg.save_epoch_checkpoints) {
            checkpoint::save(
                &dir.join(format!("checkpoints/epoch{epoch}.ckpt")),
                m,
                &vocab_hash,
                serde_json::json!({ "epoch": epoch, "dev_bleu": dev.score }),
            )?;
        }
        Ok(Some(dev.score))
    })?;
    Ok((model, report))
}

/// Run one condition end to end and write its artifacts to `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate_inputs()?;
    let dir = &cfg.output_dir;
    write_string(&dir.join("config.cfg"), &cfg.to_text())?;
    let data = prepare(cfg)?;
    data.write(dir)?;
    let (model, training) = train_model(cfg, &data, Some(dir))?;
    checkpoint::save(
        &dir.join("best.ckpt"),
        &model,
        &data.vocab.content_hash(),
        serde_json::json!({ "epoch": training.best_epoch }),
    )?;
    let opts = DecodeOptions {
        beam: cfg.beam,
        max_len: None,
    };
    let dev_hyps = translate(&model, &data.vocab, &data.dev_source, opts)?;
    let test_hyps = translate(&model, &data.vocab, &data.test_source, opts)?;
    write_sentences(&dir.join("dev.hyp"), &dev_hyps)?;
    write_sentences(&dir.join("test.hyp"), &test_hyps)?;
    let dev_bleu = score(&dev_hyps, &data.dev_reference, cfg.casing)?;
    let test_bleu = score(&test_hyps, &data.test_reference, cfg.casing)?;
    let rare = |path: &Option<std::path::PathBuf>, hyps: &[Sentence]| -> Result<Option<RareWordAccuracy>> {
        match path {
            Some(p) => Ok(Some(rare_word_accuracy(hyps, &read_lexicon(p)?))),
            None => Ok(None),
        }
    };
    let result = ExperimentResult {
        condition: cfg.condition,
        threshold: cfg.threshold,
        seed: cfg.seed,
        vocab_size: data.vocab.len(),
        train_pairs: data.train_source.len(),
        train_attachments: data.attachment_count(),
        training,
        dev_rare_words: rare(&cfg.dev_lexicon, &dev_hyps)?,
        test_rare_words: rare(&cfg.test_lexicon, &test_hyps)?,
        dev_bleu,
        test_bleu,
    };
    write_string(&dir.join("dev_bleu.json"), &serde_json::to_string_pretty(&result.dev_bleu)?)?;
    write_string(&dir.join("test_bleu.json"), &serde_json::to_string_pretty(&result.test_bleu)?)?;
    write_string(&dir.join("result.json"), &serde_json::to_string_pretty(&result)?)?;
    Ok(result)
}
