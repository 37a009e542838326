//! Dictionary sources and cleaning.
//!
//! Two raw formats are supported: CC-CEDICT lines and `headword<TAB>definition`
//! pairs. Both clean into a [`Dictionary`] that maps a tokenized headword to a
//! single tokenized definition. The canonical on-disk form is a TSV of
//! space-separated headword tokens and definition tokens, which is also the
//! format used for monolingual dictionaries.

mod cedict;
mod text;
mod tsv;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, write_string};
use crate::{Error, Result};

pub use cedict::{clean_cedict, parse_cedict, CedictCleanOptions, RawCedictEntry};
pub use text::{punct_tokenize, strip_parenthesized};
pub use tsv::{clean_tsv_dictionary, TsvCleanOptions};

/// A line the parser could not use.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictEntry {
    pub headword: Vec<String>,
    pub definition: Vec<String>,
}

impl DictEntry {
    pub fn new(headword: Vec<String>, definition: Vec<String>) -> Result<Self> {
        if headword.is_empty() {
            return Err(Error::InvalidArgument("empty headword".into()));
        }
        if definition.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "empty definition for {}",
                headword.join(" ")
            )));
        }
        if headword.iter().chain(definition.iter()).any(|t| t.is_empty() || t.chars().any(char::is_whitespace)) {
            return Err(Error::InvalidArgument(format!(
                "tokens must be non-empty and whitespace-free in entry {}",
                headword.join(" ")
            )));
        }
        Ok(DictEntry {
            headword,
            definition,
        })
    }
}

/// Cleaned headword → definition table. Headwords are unique and every
/// definition is non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Dictionary {
    entries: BTreeMap<Vec<String>, DictEntry>,
    pub source_label: String,
}

/// Everything the cleaning passes dropped, for logging.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CleanLog {
    pub skipped: Vec<SkippedLine>,
    pub deleted_entries: Vec<String>,
    pub dropped_definitions: usize,
}

impl Dictionary {
    pub fn new(source_label: impl Into<String>) -> Self {
        Dictionary {
            entries: BTreeMap::new(),
            source_label: source_label.into(),
        }
    }

    /// Insert an entry. An existing entry for the same headword gets the new
    /// definition appended.
    pub fn insert(&mut self, entry: DictEntry) {
        match self.entries.get_mut(&entry.headword) {
            Some(existing) => existing.definition.extend(entry.definition),
            None => {
                self.entries.insert(entry.headword.clone(), entry);
            }
        }
    }

    pub fn get(&self, headword: &[String]) -> Option<&DictEntry> {
        self.entries.get(headword)
    }

    pub fn contains(&self, headword: &[String]) -> bool {
        self.entries.contains_key(headword)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &DictEntry> {
        self.entries.values()
    }

    pub fn max_headword_len(&self) -> usize {
        self.entries.keys().map(Vec::len).max().unwrap_or(0)
    }

    /// Parse the canonical `headword tokens<TAB>definition tokens` form.
    pub fn from_tsv_str(text: &str, source_label: impl Into<String>) -> Result<Self> {
        let mut dict = Dictionary::new(source_label);
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (head, def) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected headword<TAB>definition".into(),
            })?;
            let entry = DictEntry::new(split_tokens(head), split_tokens(def)).map_err(|e| {
                Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                }
            })?;
            dict.insert(entry);
        }
        Ok(dict)
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        Self::from_tsv_str(&text, path.display().to_string())
    }

    pub fn to_tsv_string(&self) -> String {
        let mut out = String::new();
        for entry in self.iter() {
            out.push_str(&entry.headword.join(" "));
            out.push('\t');
            out.push_str(&entry.definition.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        write_string(path, &self.to_tsv_string())
    }

    /// View each cleaned entry as a single-definition raw CEDICT entry, so the
    /// cleaning passes can be re-run on already cleaned output.
    pub fn to_raw_entries(&self) -> Vec<RawCedictEntry> {
        self.iter()
            .map(|e| RawCedictEntry {
                traditional: e.headword.join(""),
                simplified: e.headword.join(" "),
                pronunciation: String::new(),
                definitions: vec![e.definition.join(" ")],
            })
            .collect()
    }
}

fn split_tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DictStats {
    pub entries: usize,
    pub mean_definition_len: f64,
    pub max_definition_len: usize,
}

/// Entry count and definition lengths in tokens. An empty dictionary reports zeros.
pub fn dict_stats(dict: &Dictionary) -> DictStats {
    let lens: Vec<usize> = dict.iter().map(|e| e.definition.len()).collect();
    let total: usize = lens.iter().sum();
    DictStats {
        entries: lens.len(),
        mean_definition_len: if lens.is_empty() {
            0.0
        } else {
            total as f64 / lens.len() as f64
        },
        max_definition_len: lens.iter().copied().max().unwrap_or(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        split_tokens(s)
    }

    #[test]
    fn stats_of_single_entry() {
        let mut d = Dictionary::new("t");
        d.insert(DictEntry::new(toks("死海"), toks("the Dead Sea")).unwrap());
        let s = dict_stats(&d);
        assert_eq!(s.entries, 1);
        assert_eq!(s.mean_definition_len, 3.0);
        assert_eq!(s.max_definition_len, 3);
    }

    #[test]
    fn stats_of_empty_dictionary_are_zero() {
        let s = dict_stats(&Dictionary::default());
        assert_eq!((s.entries, s.mean_definition_len, s.max_definition_len), (0, 0.0, 0));
    }

    #[test]
    fn tsv_round_trip() {
        let text = "U盘\tUSB flash drive\n中 国\tChina\n";
        let d = Dictionary::from_tsv_str(text, "x").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.max_headword_len(), 2);
        let again = Dictionary::from_tsv_str(&d.to_tsv_string(), "x").unwrap();
        assert_eq!(d, again);
    }

    #[test]
    fn canonical_tsv_rejects_missing_tab_and_empty_definition() {
        assert!(matches!(
            Dictionary::from_tsv_str("foo bar\n", "x"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(Dictionary::from_tsv_str("foo\t  \n", "x").is_err());
    }

    #[test]
    fn entry_rejects_empty_parts() {
        assert!(DictEntry::new(vec![], toks("x")).is_err());
        assert!(DictEntry::new(toks("x"), vec![]).is_err());
    }
}
