//! `headword<TAB>definition` dictionaries (e.g. Freedict exports).

use super::text::{normalize_definition, punct_tokenize, strip_parenthesized};
use super::{CleanLog, DictEntry, Dictionary, SkippedLine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TsvCleanOptions {
    /// Input is already tokenized like the corpus: split on whitespace only.
    pub pretokenized: bool,
}

/// Clean a TSV dictionary: parenthesized notes are removed from headwords
/// only, definitions are kept as they are, lines sharing a headword are
/// merged in order and empty entries are deleted.
pub fn clean_tsv_dictionary(text: &str, opts: TsvCleanOptions) -> (Dictionary, CleanLog) {
    let tokenize = |s: &str| -> Vec<String> {
        if opts.pretokenized {
            s.split_whitespace().map(str::to_string).collect()
        } else {
            punct_tokenize(s)
        }
    };
    let mut log = CleanLog::default();
    let mut dict = Dictionary::new("tsv");
    let mut empty_heads = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let Some((head, definition)) = line.split_once('\t') else {
            log.skipped.push(SkippedLine {
                line: i + 1,
                reason: "missing tab separator".into(),
                text: raw.to_string(),
            });
            continue;
        };
        let head_tokens = tokenize(&normalize_definition(&strip_parenthesized(head)));
        if head_tokens.is_empty() {
            log.skipped.push(SkippedLine {
                line: i + 1,
                reason: "headword empty after removing notes".into(),
                text: raw.to_string(),
            });
            continue;
        }
        let def_tokens = tokenize(definition);
        match DictEntry::new(head_tokens.clone(), def_tokens) {
            Ok(entry) => dict.insert(entry),
            Err(_) => empty_heads.push(head_tokens),
        }
    }
    for head in empty_heads {
        if !dict.contains(&head) {
            log.deleted_entries.push(head.join(" "));
        }
    }
    (dict, log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn def(d: &Dictionary, head: &str) -> Option<String> {
        let key: Vec<String> = head.split(' ').map(str::to_string).collect();
        d.get(&key).map(|e| e.definition.join(" "))
    }

    #[test]
    fn headword_notes_removed_definition_kept() {
        let (d, _) = clean_tsv_dictionary("(Aktien) zusammenlegen\tto merge (with)\n", Default::default());
        assert_eq!(d.len(), 1);
        assert_eq!(def(&d, "zusammenlegen").unwrap(), "to merge ( with )");
    }

    #[test]
    fn empty_definition_deletes_entry() {
        let (d, log) = clean_tsv_dictionary("foo\t\n", Default::default());
        assert!(d.is_empty());
        assert_eq!(log.deleted_entries, vec!["foo"]);
    }

    #[test]
    fn shared_headwords_merge() {
        let (d, _) = clean_tsv_dictionary("bank\tshore\nbank\tbench\n", Default::default());
        assert_eq!(def(&d, "bank").unwrap(), "shore bench");
    }

    #[test]
    fn missing_tab_is_skipped() {
        let (d, log) = clean_tsv_dictionary("no tab here\nHaus\thouse\n", Default::default());
        assert_eq!(d.len(), 1);
        assert_eq!(log.skipped.len(), 1);
        assert_eq!(log.skipped[0].line, 1);
    }

    #[test]
    fn pretokenized_input_splits_on_whitespace_only() {
        let opts = TsvCleanOptions { pretokenized: true };
        let (d, _) = clean_tsv_dictionary("New York\tNew York (city)\n", opts);
        assert_eq!(def(&d, "New York").unwrap(), "New York (city)");
    }
}
