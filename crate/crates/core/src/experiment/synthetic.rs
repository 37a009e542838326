//! A generated rare-word translation task with known ground truth.
//!
//! Source sentences are drawn from a Zipfian distribution over common source
//! words, each of which has one fixed target translation; translation is
//! word by word and monotone. Rare source types are synonyms of common
//! words: they translate to a common target word that only the dictionary
//! reveals. Training-rare types occur between 1 and `max_train_count` times
//! in training; held-out rare types never occur in training and are sampled
//! into dev and test. Each rare type has one dictionary entry whose
//! definition embeds the correct target word among gloss words that never
//! occur in the target text.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::pipeline::{write_lexicon, LexiconEntry};
use crate::dict::{DictEntry, Dictionary};
use crate::error::write_string;
use crate::seed::rng_for;
use crate::textprep::{ParallelCorpus, Sentence, RESERVED};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub train_pairs: usize,
    pub dev_pairs: usize,
    pub test_pairs: usize,
    pub common_types: usize,
    pub train_rare_types: usize,
    pub heldout_rare_types: usize,
    /// Each training-rare type occurs `1..=max_train_count` times in training.
    pub max_train_count: usize,
    /// Probability that a dev or test token is a held-out rare word. Zero
    /// disables rare words everywhere.
    pub rare_fraction: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            train_pairs: 5000,
            dev_pairs: 500,
            test_pairs: 500,
            common_types: 150,
            train_rare_types: 1500,
            heldout_rare_types: 200,
            max_train_count: 3,
            rare_fraction: 0.05,
            min_len: 4,
            max_len: 8,
            zipf_exponent: 0.8,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub spec: SyntheticSpec,
    pub train: ParallelCorpus,
    pub dev: ParallelCorpus,
    pub test: ParallelCorpus,
    pub dictionary: Dictionary,
    pub dev_lexicon: Vec<LexiconEntry>,
    pub test_lexicon: Vec<LexiconEntry>,
    pub train_rare: Vec<String>,
    pub heldout_rare: Vec<String>,
    /// Reserved symbols plus every training type seen more than `max_train_count` times.
    pub recommended_vocab_size: usize,
}

const SOURCE_CONSONANTS: &[u8] = b"bdgkmnprstvz";
const SOURCE_VOWELS: &[u8] = b"aiou";
const TARGET_CONSONANTS: &[u8] = b"cfhjlqwx";
const TARGET_VOWELS: &[u8] = b"ey";
const GLOSS_TEMPLATES: &[&str] = &[
    "_",
    "a kind of _",
    "variant of _",
    "_ or similar",
    "the _",
    "to _",
    "sort of _ thing",
    "form used as _",
];

/// `n` distinct pseudo-words of 2 to 4 syllables.
fn words(n: usize, consonants: &[u8], vowels: &[u8], taken: &mut BTreeSet<String>, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let syllables = rng.random_range(2..=4);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push(*consonants.choose(rng).expect("non-empty") as char);
            w.push(*vowels.choose(rng).expect("non-empty") as char);
        }
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn validate(spec: &SyntheticSpec) -> Result<()> {
    if spec.common_types == 0 || spec.min_len == 0 || spec.min_len > spec.max_len {
        return Err(Error::InvalidArgument("need common types and 1 ≤ min_len ≤ max_len".into()));
    }
    if !(0.0..=1.0).contains(&spec.rare_fraction) {
        return Err(Error::InvalidArgument(format!("rare fraction {} outside [0, 1]", spec.rare_fraction)));
    }
    if spec.rare_fraction > 0.0 && (spec.max_train_count == 0 || spec.heldout_rare_types == 0) {
        return Err(Error::InvalidArgument("rare words need max_train_count ≥ 1 and held-out types".into()));
    }
    Ok(())
}

pub fn gen_synthetic_task(spec: &SyntheticSpec) -> Result<SyntheticTask> {
    validate(spec)?;
    let mut rng = rng_for(spec.seed, "synthetic/lexicon");
    let mut taken = BTreeSet::new();
    let common_src = words(spec.common_types, SOURCE_CONSONANTS, SOURCE_VOWELS, &mut taken, &mut rng);
    let common_tgt = words(spec.common_types, TARGET_CONSONANTS, TARGET_VOWELS, &mut taken, &mut rng);
    let with_rare = spec.rare_fraction > 0.0;
    let (n_train_rare, n_heldout) = if with_rare {
        (spec.train_rare_types, spec.heldout_rare_types)
    } else {
        (0, 0)
    };
    let train_rare = words(n_train_rare, SOURCE_CONSONANTS, SOURCE_VOWELS, &mut taken, &mut rng);
    let heldout_rare = words(n_heldout, SOURCE_CONSONANTS, SOURCE_VOWELS, &mut taken, &mut rng);

    let mut translation: HashMap<String, String> = common_src.iter().cloned().zip(common_tgt.iter().cloned()).collect();
    let mut dictionary = Dictionary::new("synthetic");
    for r in train_rare.iter().chain(&heldout_rare) {
        let t = common_tgt.choose(&mut rng).expect("non-empty").clone();
        let template = GLOSS_TEMPLATES.choose(&mut rng).expect("non-empty");
        let definition = template.split(' ').map(|g| if g == "_" { t.clone() } else { g.to_string() }).collect();
        dictionary.insert(DictEntry::new(vec![r.clone()], definition)?);
        translation.insert(r.clone(), t);
    }

    let zipf = Zipf::new(spec.common_types as f64, spec.zipf_exponent).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let sample_common = |rng: &mut ChaCha8Rng| common_src[zipf.sample(rng) as usize - 1].clone();
    let sentences = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<String>> {
        (0..n)
            .map(|_| {
                let len = rng.random_range(spec.min_len..=spec.max_len);
                (0..len).map(|_| sample_common(rng)).collect()
            })
            .collect()
    };

    let mut rng = rng_for(spec.seed, "synthetic/train");
    let mut train_src = sentences(spec.train_pairs, &mut rng);
    let mut slots: Vec<(usize, usize)> = train_src
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (0..s.len()).map(move |j| (i, j)))
        .collect();
    slots.shuffle(&mut rng);
    let mut slots = slots.into_iter();
    for r in &train_rare {
        let count = rng.random_range(1..=spec.max_train_count);
        for _ in 0..count {
            let (i, j) = slots
                .next()
                .ok_or_else(|| Error::InvalidArgument("not enough training tokens for the rare types".into()))?;
            train_src[i][j] = r.clone();
        }
    }

    let held_out_split = |n: usize, label: &str| -> (Vec<Vec<String>>, Vec<LexiconEntry>) {
        let mut rng = rng_for(spec.seed, label);
        let mut src = sentences(n, &mut rng);
        let mut lexicon = Vec::new();
        for (i, s) in src.iter_mut().enumerate() {
            for (j, tok) in s.iter_mut().enumerate() {
                if with_rare && rng.random_bool(spec.rare_fraction) {
                    *tok = heldout_rare.choose(&mut rng).expect("non-empty").clone();
                    lexicon.push(LexiconEntry {
                        line: i,
                        position: j,
                        source: tok.clone(),
                        expected: translation[tok.as_str()].clone(),
                    });
                }
            }
        }
        (src, lexicon)
    };
    let (dev_src, dev_lexicon) = held_out_split(spec.dev_pairs, "synthetic/dev");
    let (test_src, test_lexicon) = held_out_split(spec.test_pairs, "synthetic/test");

    let corpus = |src: Vec<Vec<String>>| -> Result<ParallelCorpus> {
        let target = src
            .iter()
            .map(|s| Sentence::new(s.iter().map(|w| translation[w.as_str()].clone()).collect()))
            .collect::<Result<Vec<_>>>()?;
        let source = src.into_iter().map(Sentence::new).collect::<Result<Vec<_>>>()?;
        ParallelCorpus::new(source, target)
    };
    let train = corpus(train_src)?;
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in train.source.iter().chain(&train.target) {
        for t in s.tokens() {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let frequent = counts.values().filter(|&&c| c > spec.max_train_count).count();
    Ok(SyntheticTask {
        spec: spec.clone(),
        train,
        dev: corpus(dev_src)?,
        test: corpus(test_src)?,
        dictionary,
        dev_lexicon,
        test_lexicon,
        train_rare,
        heldout_rare,
        recommended_vocab_size: RESERVED.len() + frequent,
    })
}

#[derive(Serialize)]
struct TaskSummary<'a> {
    spec: &'a SyntheticSpec,
    recommended_vocab_size: usize,
    dictionary_entries: usize,
    dev_rare_occurrences: usize,
    test_rare_occurrences: usize,
}

impl SyntheticTask {
    /// Write corpora, dictionary, lexicons, `task.json` and an `experiment.cfg`
    /// template (attach condition, paths relative to `dir`).
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.train.write(&dir.join("train.src"), &dir.join("train.tgt"))?;
        self.dev.write(&dir.join("dev.src"), &dir.join("dev.tgt"))?;
        self.test.write(&dir.join("test.src"), &dir.join("test.tgt"))?;
        self.dictionary.write_tsv(&dir.join("dict.tsv"))?;
        write_lexicon(&dir.join("dev.lex"), &self.dev_lexicon)?;
        write_lexicon(&dir.join("test.lex"), &self.test_lexicon)?;
        let summary = TaskSummary {
            spec: &self.spec,
            recommended_vocab_size: self.recommended_vocab_size,
            dictionary_entries: self.dictionary.len(),
            dev_rare_occurrences: self.dev_lexicon.len(),
            test_rare_occurrences: self.test_lexicon.len(),
        };
        write_string(&dir.join("task.json"), &serde_json::to_string_pretty(&summary)?)?;
        write_string(&dir.join("experiment.cfg"), &self.experiment_config("run").to_text())?;
        Ok(())
    }

    /// A config for this task with paths relative to the task directory.
    pub fn experiment_config(&self, output_dir: &str) -> ExperimentConfig {
        let mut cfg = synthetic_defaults();
        cfg.seed = self.spec.seed;
        cfg.dictionary = Some("dict.tsv".into());
        cfg.train_source = "train.src".into();
        cfg.train_target = "train.tgt".into();
        cfg.dev_source = "dev.src".into();
        cfg.dev_target = "dev.tgt".into();
        cfg.test_source = "test.src".into();
        cfg.test_target = "test.tgt".into();
        cfg.dev_lexicon = Some("dev.lex".into());
        cfg.test_lexicon = Some("test.lex".into());
        cfg.vocab_size = self.recommended_vocab_size;
        cfg.output_dir = output_dir.into();
        cfg
    }
}

/// Model and training settings sized for the synthetic task on one CPU core.
pub fn synthetic_defaults() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.model.dim = 32;
    cfg.model.encoder_layers = 1;
    cfg.model.decoder_layers = 1;
    cfg.model.heads = 2;
    cfg.model.ffn_dim = 64;
    cfg.model.dropout = 0.1;
    cfg.model.max_len = 128;
    cfg.training.epochs = 15;
    cfg.training.batch_tokens = 256;
    cfg.training.learning_rate = 3e-3;
    cfg.training.warmup_steps = 100;
    cfg.beam = 1;
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attach::{make_attached_corpus, AttachOptions, FrequencyTable};
    use crate::textprep::build_vocab;

    fn small(rare_fraction: f64) -> SyntheticSpec {
        SyntheticSpec {
            train_pairs: 300,
            dev_pairs: 50,
            test_pairs: 50,
            common_types: 30,
            train_rare_types: 40,
            heldout_rare_types: 20,
            rare_fraction,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn every_rare_type_has_one_entry() {
        let t = gen_synthetic_task(&small(0.1)).unwrap();
        assert_eq!(t.dictionary.len(), t.train_rare.len() + t.heldout_rare.len());
        for r in t.train_rare.iter().chain(&t.heldout_rare) {
            assert!(t.dictionary.contains(std::slice::from_ref(r)));
        }
    }

    #[test]
    fn held_out_types_never_occur_in_training() {
        let t = gen_synthetic_task(&small(0.1)).unwrap();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for s in &t.train.source {
            for tok in s.tokens() {
                *counts.entry(tok).or_default() += 1;
            }
        }
        for r in &t.heldout_rare {
            assert_eq!(counts.get(r.as_str()), None);
        }
        for r in &t.train_rare {
            assert!((1..=3).contains(&counts[r.as_str()]));
        }
        assert!(!t.dev_lexicon.is_empty());
        for e in &t.dev_lexicon {
            assert_eq!(t.dev.source[e.line].tokens()[e.position], e.source);
            assert_eq!(t.dev.target[e.line].tokens()[e.position], e.expected);
        }
    }

    #[test]
    fn no_rare_words_means_attach_equals_baseline() {
        let t = gen_synthetic_task(&small(0.0)).unwrap();
        assert!(t.dictionary.is_empty());
        let freq = FrequencyTable::from_sentences(&t.train.source, &t.dictionary);
        let vocab = build_vocab(&t.train, 1000).unwrap();
        let attached = make_attached_corpus(&t.train.source, &t.dictionary, &freq, &vocab, None, AttachOptions::default()).unwrap();
        for (a, s) in attached.iter().zip(&t.train.source) {
            assert!(a.attachments.is_empty());
            assert_eq!(&a.tokens, s.tokens());
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(gen_synthetic_task(&small(0.1)).unwrap(), gen_synthetic_task(&small(0.1)).unwrap());
    }
}
