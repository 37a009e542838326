//! Experiment configuration in a flat `key = value` text format.
//!
//! Blank lines and lines starting with `#` are ignored. Every field has a key;
//! [`ExperimentConfig::to_text`] writes all of them, so a written config fully
//! describes a run. Relative paths in a file are resolved against the file's
//! directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attach::{AttachOptions, AttachScope, Segmentation, Threshold, MAX_DEFINITION_LEN};
use crate::error::read_to_string;
use crate::eval::Casing;
use crate::model::{ModelConfig, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Baseline,
    Append,
    Fuse,
    Attach,
}

impl Condition {
    pub const ALL: [Condition; 4] = [Condition::Baseline, Condition::Append, Condition::Fuse, Condition::Attach];
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Baseline => "baseline",
            Condition::Append => "append",
            Condition::Fuse => "fuse",
            Condition::Attach => "attach",
        })
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Condition::Baseline),
            "append" => Ok(Condition::Append),
            "fuse" => Ok(Condition::Fuse),
            "attach" => Ok(Condition::Attach),
            other => Err(Error::Config(format!("unknown condition {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DictionaryKind {
    /// Definitions are in the target language.
    Bilingual,
    /// Definitions are in the source language.
    Monolingual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub condition: Condition,
    pub segmentation: Segmentation,
    pub threshold: Threshold,
    pub scope: AttachScope,
    pub single_word_only: bool,
    pub max_definition_len: usize,
    pub dictionary: Option<PathBuf>,
    pub dictionary_kind: DictionaryKind,
    pub train_source: PathBuf,
    pub train_target: PathBuf,
    pub dev_source: PathBuf,
    pub dev_target: PathBuf,
    pub test_source: PathBuf,
    pub test_target: PathBuf,
    /// Rare-word ground truth for the dev set, if available.
    pub dev_lexicon: Option<PathBuf>,
    pub test_lexicon: Option<PathBuf>,
    pub vocab_size: usize,
    pub bpe_ops: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub model: ModelConfig,
    pub training: TrainConfig,
    /// Beam for the final dev and test translations.
    pub beam: usize,
    pub casing: Casing,
    pub save_epoch_checkpoints: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            condition: Condition::Attach,
            segmentation: Segmentation::Word,
            threshold: Threshold::Infinite,
            scope: AttachScope::Unknown,
            single_word_only: true,
            max_definition_len: MAX_DEFINITION_LEN,
            dictionary: None,
            dictionary_kind: DictionaryKind::Bilingual,
            train_source: PathBuf::new(),
            train_target: PathBuf::new(),
            dev_source: PathBuf::new(),
            dev_target: PathBuf::new(),
            test_source: PathBuf::new(),
            test_target: PathBuf::new(),
            dev_lexicon: None,
            test_lexicon: None,
            vocab_size: 25_000,
            bpe_ops: 16_000,
            output_dir: PathBuf::from("run"),
            seed: 1,
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            beam: 4,
            casing: Casing::Insensitive,
            save_epoch_checkpoints: false,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

fn parse_num<N: FromStr>(key: &str, v: &str) -> Result<N> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl ExperimentConfig {
    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "condition" => self.condition = v.parse()?,
            "segmentation" => {
                self.segmentation = match v {
                    "word" => Segmentation::Word,
                    "bpe" => Segmentation::Bpe,
                    _ => return Err(Error::Config(format!("segmentation: expected word or bpe, got {v:?}"))),
                }
            }
            "k" => self.threshold = v.parse().map_err(|e: Error| Error::Config(e.to_string()))?,
            "scope" => {
                self.scope = match v {
                    "unk" | "unknown" => AttachScope::Unknown,
                    "all" => AttachScope::All,
                    _ => return Err(Error::Config(format!("scope: expected unk or all, got {v:?}"))),
                }
            }
            "single_word_only" => self.single_word_only = parse_bool(key, v)?,
            "max_definition_len" => self.max_definition_len = parse_num(key, v)?,
            "dictionary" => self.dictionary = opt_path(v),
            "dictionary_kind" => {
                self.dictionary_kind = match v {
                    "bilingual" => DictionaryKind::Bilingual,
                    "monolingual" => DictionaryKind::Monolingual,
                    _ => return Err(Error::Config(format!("dictionary_kind: expected bilingual or monolingual, got {v:?}"))),
                }
            }
            "train_source" => self.train_source = PathBuf::from(v),
            "train_target" => self.train_target = PathBuf::from(v),
            "dev_source" => self.dev_source = PathBuf::from(v),
            "dev_target" => self.dev_target = PathBuf::from(v),
            "test_source" => self.test_source = PathBuf::from(v),
            "test_target" => self.test_target = PathBuf::from(v),
            "dev_lexicon" => self.dev_lexicon = opt_path(v),
            "test_lexicon" => self.test_lexicon = opt_path(v),
            "vocab_size" => self.vocab_size = parse_num(key, v)?,
            "bpe_ops" => self.bpe_ops = parse_num(key, v)?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "seed" => self.seed = parse_num(key, v)?,
            "dim" => self.model.dim = parse_num(key, v)?,
            "encoder_layers" => self.model.encoder_layers = parse_num(key, v)?,
            "decoder_layers" => self.model.decoder_layers = parse_num(key, v)?,
            "heads" => self.model.heads = parse_num(key, v)?,
            "ffn_dim" => self.model.ffn_dim = parse_num(key, v)?,
            "dropout" => self.model.dropout = parse_num(key, v)?,
            "max_len" => self.model.max_len = parse_num(key, v)?,
            "label_smoothing" => self.model.label_smoothing = parse_num(key, v)?,
            "epochs" => self.training.epochs = parse_num(key, v)?,
            "batch_tokens" => self.training.batch_tokens = parse_num(key, v)?,
            "learning_rate" => self.training.learning_rate = parse_num(key, v)?,
            "warmup_steps" => self.training.warmup_steps = parse_num(key, v)?,
            "adam_beta1" => self.training.beta1 = parse_num(key, v)?,
            "adam_beta2" => self.training.beta2 = parse_num(key, v)?,
            "adam_eps" => self.training.adam_eps = parse_num(key, v)?,
            "beam" => self.beam = parse_num(key, v)?,
            "casing" => {
                self.casing = match v {
                    "insensitive" => Casing::Insensitive,
                    "sensitive" => Casing::Sensitive,
                    _ => return Err(Error::Config(format!("casing: expected insensitive or sensitive, got {v:?}"))),
                }
            }
            "save_epoch_checkpoints" => self.save_epoch_checkpoints = parse_bool(key, v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Parse config text on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Apply config text on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            self.set(key, value).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Read a config file, resolving relative paths against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_text(&read_to_string(path)?)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.train_source,
            &mut self.train_target,
            &mut self.dev_source,
            &mut self.dev_target,
            &mut self.test_source,
            &mut self.test_target,
            &mut self.output_dir,
        ] {
            fix(p);
        }
        for p in [&mut self.dictionary, &mut self.dev_lexicon, &mut self.test_lexicon].into_iter().flatten() {
            fix(p);
        }
    }

    pub fn to_text(&self) -> String {
        let m = &self.model;
        let t = &self.training;
        let seg = match self.segmentation {
            Segmentation::Word => "word",
            Segmentation::Bpe => "bpe",
        };
        let scope = match self.scope {
            AttachScope::Unknown => "unk",
            AttachScope::All => "all",
        };
        let kind = match self.dictionary_kind {
            DictionaryKind::Bilingual => "bilingual",
            DictionaryKind::Monolingual => "monolingual",
        };
        let casing = match self.casing {
            Casing::Insensitive => "insensitive",
            Casing::Sensitive => "sensitive",
        };
        let lines = [
            ("condition", self.condition.to_string()),
            ("segmentation", seg.to_string()),
            ("k", self.threshold.to_string()),
            ("scope", scope.to_string()),
            ("single_word_only", self.single_word_only.to_string()),
            ("max_definition_len", self.max_definition_len.to_string()),
            ("dictionary", show_path(&self.dictionary)),
            ("dictionary_kind", kind.to_string()),
            ("train_source", self.train_source.display().to_string()),
            ("train_target", self.train_target.display().to_string()),
            ("dev_source", self.dev_source.display().to_string()),
            ("dev_target", self.dev_target.display().to_string()),
            ("test_source", self.test_source.display().to_string()),
            ("test_target", self.test_target.display().to_string()),
            ("dev_lexicon", show_path(&self.dev_lexicon)),
            ("test_lexicon", show_path(&self.test_lexicon)),
            ("vocab_size", self.vocab_size.to_string()),
            ("bpe_ops", self.bpe_ops.to_string()),
            ("output_dir", self.output_dir.display().to_string()),
            ("seed", self.seed.to_string()),
            ("dim", m.dim.to_string()),
            ("encoder_layers", m.encoder_layers.to_string()),
            ("decoder_layers", m.decoder_layers.to_string()),
            ("heads", m.heads.to_string()),
            ("ffn_dim", m.ffn_dim.to_string()),
            ("dropout", m.dropout.to_string()),
            ("max_len", m.max_len.to_string()),
            ("label_smoothing", m.label_smoothing.to_string()),
            ("epochs", t.epochs.to_string()),
            ("batch_tokens", t.batch_tokens.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("warmup_steps", t.warmup_steps.to_string()),
            ("adam_beta1", t.beta1.to_string()),
            ("adam_beta2", t.beta2.to_string()),
            ("adam_eps", t.adam_eps.to_string()),
            ("beam", self.beam.to_string()),
            ("casing", casing.to_string()),
            ("save_epoch_checkpoints", self.save_epoch_checkpoints.to_string()),
        ];
        let mut out = String::new();
        for (k, v) in lines {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Model settings with the experiment seed.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            seed: self.seed,
            ..self.model.clone()
        }
    }

    pub fn attach_options(&self) -> AttachOptions {
        AttachOptions {
            segmentation: self.segmentation,
            threshold: self.threshold,
            single_word_only: self.single_word_only,
            scope: self.scope,
            attach_definitions: self.condition == Condition::Attach,
            max_definition_len: self.max_definition_len,
        }
    }

    /// Checks that need no file access.
    pub fn validate(&self) -> Result<()> {
        match self.condition {
            Condition::Append => {
                if self.dictionary.is_none() {
                    return Err(Error::Config("append needs a dictionary".into()));
                }
                if self.dictionary_kind != DictionaryKind::Bilingual {
                    return Err(Error::Config("append needs a bilingual dictionary".into()));
                }
            }
            Condition::Fuse | Condition::Attach if self.dictionary.is_none() => {
                return Err(Error::Config(format!("{} needs a dictionary", self.condition)));
            }
            _ => {}
        }
        for (name, p) in [
            ("train_source", &self.train_source),
            ("train_target", &self.train_target),
            ("dev_source", &self.dev_source),
            ("dev_target", &self.dev_target),
            ("test_source", &self.test_source),
            ("test_target", &self.test_target),
        ] {
            if p.as_os_str().is_empty() {
                return Err(Error::Config(format!("{name} is not set")));
            }
        }
        if self.vocab_size < 4 {
            return Err(Error::Config("vocab_size must leave room for the 4 reserved symbols".into()));
        }
        if self.segmentation == Segmentation::Bpe && self.bpe_ops == 0 {
            return Err(Error::Config("bpe segmentation needs bpe_ops > 0".into()));
        }
        if self.max_definition_len == 0 || self.max_definition_len > MAX_DEFINITION_LEN {
            return Err(Error::Config(format!("max_definition_len must be in 1..={MAX_DEFINITION_LEN}")));
        }
        if self.beam == 0 {
            return Err(Error::Config("beam must be at least 1".into()));
        }
        self.model_config().validate()?;
        self.training.validate()?;
        Ok(())
    }

    /// [`validate`](Self::validate) plus existence of every input file.
    pub fn validate_inputs(&self) -> Result<()> {
        self.validate()?;
        let mut inputs = vec![
            &self.train_source,
            &self.train_target,
            &self.dev_source,
            &self.dev_target,
            &self.test_source,
            &self.test_target,
        ];
        inputs.extend(self.dictionary.iter());
        inputs.extend(self.dev_lexicon.iter());
        inputs.extend(self.test_lexicon.iter());
        for p in inputs {
            if !p.is_file() {
                return Err(Error::Config(format!("input file {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        for key in ["train_source", "train_target", "dev_source", "dev_target", "test_source", "test_target"] {
            c.set(key, &format!("data/{key}")).unwrap();
        }
        c.dictionary = Some("dict.tsv".into());
        c
    }

    #[test]
    fn text_round_trip() {
        let mut c = complete();
        c.threshold = Threshold::Count(5);
        c.condition = Condition::Fuse;
        c.model.dropout = 0.25;
        let back = ExperimentConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert!(c.to_text().contains("k = 5\n"));
    }

    #[test]
    fn infinity_is_spelled_inf() {
        let c = ExperimentConfig::from_text("k = inf\n# comment\n\ncondition = attach").unwrap();
        assert_eq!(c.threshold, Threshold::Infinite);
        assert!(c.to_text().contains("k = inf\n"));
    }

    #[test]
    fn bad_lines_report_their_number() {
        let err = ExperimentConfig::from_text("seed = 1\nbogus = 2").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(ExperimentConfig::from_text("no equals sign").is_err());
        assert!(ExperimentConfig::from_text("k = lots").is_err());
    }

    #[test]
    fn condition_dictionary_rules() {
        let mut c = complete();
        c.condition = Condition::Append;
        c.dictionary_kind = DictionaryKind::Monolingual;
        assert!(c.validate().is_err());
        c.dictionary_kind = DictionaryKind::Bilingual;
        assert!(c.validate().is_ok());
        c.dictionary = None;
        assert!(c.validate().is_err());
        c.condition = Condition::Attach;
        assert!(c.validate().is_err());
        c.condition = Condition::Baseline;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn word_mode_ignores_bpe_ops() {
        let mut c = complete();
        c.bpe_ops = 0;
        assert!(c.validate().is_ok());
        c.segmentation = Segmentation::Bpe;
        assert!(c.validate().is_err());
    }

    #[test]
    fn relative_paths_resolve_against_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.cfg");
        std::fs::write(&path, "train_source = a/train.src\ndictionary = /abs/dict.tsv\n").unwrap();
        let c = ExperimentConfig::from_file(&path).unwrap();
        assert_eq!(c.train_source, dir.path().join("a/train.src"));
        assert_eq!(c.dictionary, Some(PathBuf::from("/abs/dict.tsv")));
    }
}
