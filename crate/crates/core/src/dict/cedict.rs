//! CC-CEDICT parsing and cleaning.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::text::{find_see_reference, normalize_definition, strip_abbreviations, strip_parenthesized};
use super::{CleanLog, DictEntry, Dictionary, SkippedLine};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCedictEntry {
    pub traditional: String,
    pub simplified: String,
    pub pronunciation: String,
    pub definitions: Vec<String>,
}

/// Parse `TRAD SIMP [pinyin] /def1/def2/` lines. Comment lines (`#`) and
/// blank lines are skipped silently; malformed lines go to the skip report.
pub fn parse_cedict(text: &str) -> (Vec<RawCedictEntry>, Vec<SkippedLine>) {
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches(['\r', '\n']).trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match parse_line(line) {
            Ok(entry) => entries.push(entry),
            Err(reason) => skipped.push(SkippedLine {
                line: i + 1,
                reason: reason.to_string(),
                text: raw.to_string(),
            }),
        }
    }
    (entries, skipped)
}

fn parse_line(line: &str) -> Result<RawCedictEntry, &'static str> {
    let (traditional, rest) = line.split_once(' ').ok_or("missing simplified headword")?;
    let (simplified, rest) = rest.trim_start().split_once(' ').ok_or("missing pronunciation")?;
    let rest = rest.trim_start();
    if !rest.starts_with('[') {
        return Err("missing [pronunciation]");
    }
    let close = rest.find(']').ok_or("unterminated pronunciation")?;
    let pronunciation = &rest[1..close];
    let defs = rest[close + 1..].trim();
    if !defs.starts_with('/') {
        return Err("definitions must start with '/'");
    }
    if defs.len() < 2 || !defs.ends_with('/') {
        return Err("definitions must end with '/'");
    }
    if simplified.is_empty() {
        return Err("empty simplified headword");
    }
    let definitions = defs[1..defs.len() - 1]
        .split('/')
        .map(str::trim)
        .filter(|d| !d.is_empty())
        .map(str::to_string)
        .collect();
    Ok(RawCedictEntry {
        traditional: traditional.to_string(),
        simplified: simplified.to_string(),
        pronunciation: pronunciation.to_string(),
        definitions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CedictCleanOptions {
    /// Replace `see c` / `see also c` with the definitions of `c`. When off,
    /// references are left in place as ordinary text.
    pub resolve_cross_refs: bool,
    /// Longest reference chain followed before the definition is dropped.
    pub max_ref_depth: usize,
}

impl Default for CedictCleanOptions {
    fn default() -> Self {
        CedictCleanOptions {
            resolve_cross_refs: true,
            max_ref_depth: 5,
        }
    }
}

// Bound on re-running the per-definition passes, in case removing
// parentheses exposes a new reference.
const MAX_ROUNDS: usize = 4;

struct Cleaner<'a> {
    table: &'a BTreeMap<&'a str, Vec<&'a str>>,
    opts: CedictCleanOptions,
    dropped: usize,
}

impl Cleaner<'_> {
    /// Expand `see` references in one definition string. `None` means the
    /// string must be dropped (cycle, unknown target or chain too deep).
    fn resolve(&mut self, def: &str, chain: &mut Vec<String>) -> Option<Vec<String>> {
        let Some(r) = find_see_reference(def) else {
            return Some(vec![def.to_string()]);
        };
        if chain.len() > self.opts.max_ref_depth || chain.contains(&r.target) {
            return None;
        }
        let targets = self.table.get(r.target.as_str())?;
        let mut out = vec![def[..r.start].to_string()];
        chain.push(r.target.clone());
        let mut expanded = Vec::new();
        for target_def in targets {
            match self.resolve(&strip_abbreviations(target_def), chain) {
                Some(v) => expanded.extend(v),
                None => self.dropped += 1,
            }
        }
        chain.pop();
        if expanded.iter().all(|d| normalize_definition(&strip_parenthesized(d)).is_empty()) {
            return None;
        }
        out.extend(expanded);
        out.extend(self.resolve(&def[r.end..], chain)?);
        Some(out)
    }

    fn clean_definition(&mut self, headword: &str, def: &str) -> Vec<String> {
        let mut out = Vec::new();
        let mut pending = vec![def.to_string()];
        for _ in 0..MAX_ROUNDS {
            let mut next = Vec::new();
            for piece in pending {
                let no_abbr = strip_abbreviations(&piece);
                let resolved = if self.opts.resolve_cross_refs {
                    match self.resolve(&no_abbr, &mut vec![headword.to_string()]) {
                        Some(v) => v,
                        None => {
                            self.dropped += 1;
                            continue;
                        }
                    }
                } else {
                    vec![no_abbr]
                };
                let stable = resolved.len() == 1;
                for r in resolved {
                    let cleaned = normalize_definition(&strip_parenthesized(&r));
                    if cleaned.is_empty() {
                        continue;
                    }
                    if stable && cleaned == piece {
                        out.push(cleaned);
                    } else {
                        next.push(cleaned);
                    }
                }
            }
            if next.is_empty() {
                return out;
            }
            pending = next;
        }
        out.extend(pending);
        out
    }
}

/// Clean raw CEDICT entries into a [`Dictionary`].
///
/// Per entry: drop the traditional headword and pronunciation, remove
/// `abbr. for c`, expand `see c` / `see also c` from the raw table, remove
/// parenthesized material, drop duplicate definitions, delete entries left
/// empty, and join the remaining definitions into one whitespace-tokenized
/// definition. Raw entries sharing a simplified headword are merged first.
pub fn clean_cedict(raw: &[RawCedictEntry], opts: CedictCleanOptions) -> (Dictionary, CleanLog) {
    let mut table: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for entry in raw {
        let key = entry.simplified.as_str();
        let defs = table.entry(key).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        defs.extend(entry.definitions.iter().map(String::as_str));
    }

    let mut cleaner = Cleaner {
        table: &table,
        opts,
        dropped: 0,
    };
    let mut log = CleanLog::default();
    let mut dict = Dictionary::new("cedict");
    for headword in order {
        let mut seen = HashSet::new();
        let mut kept: Vec<String> = Vec::new();
        for def in &table[headword] {
            for cleaned in cleaner.clean_definition(headword, def) {
                if seen.insert(cleaned.clone()) {
                    kept.push(cleaned);
                }
            }
        }
        let head_tokens: Vec<String> = headword.split_whitespace().map(str::to_string).collect();
        let def_tokens: Vec<String> = kept.iter().flat_map(|d| d.split_whitespace()).map(str::to_string).collect();
        match DictEntry::new(head_tokens, def_tokens) {
            Ok(entry) => dict.insert(entry),
            Err(_) => {
                log::debug!("deleting empty entry {headword}");
                log.deleted_entries.push(headword.to_string());
            }
        }
    }
    log.dropped_definitions = cleaner.dropped;
    (dict, log)
}
