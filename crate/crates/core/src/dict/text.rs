//! String helpers shared by the cleaning passes.

use std::sync::OnceLock;

use regex::Regex;

const OPEN: [char; 2] = ['(', '（'];
const CLOSE: [char; 2] = [')', '）'];

/// Remove every parenthesized span, nested spans included. A stray closing
/// parenthesis is dropped; an unclosed one removes the rest of the string.
pub fn strip_parenthesized(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut depth = 0usize;
    for ch in s.chars() {
        if OPEN.contains(&ch) {
            depth += 1;
            // keep words on either side of the removed span apart
            out.push(' ');
        } else if CLOSE.contains(&ch) {
            depth = depth.saturating_sub(1);
            out.push(' ');
        } else if depth == 0 {
            out.push(ch);
        }
    }
    out
}

fn is_trim_char(ch: char) -> bool {
    ch.is_whitespace() || matches!(ch, ',' | ';' | ':' | '，' | '；' | '：' | '、')
}

/// Collapse whitespace, fold separator runs left behind by removals and trim
/// dangling separators at both ends.
pub(crate) fn normalize_definition(s: &str) -> String {
    static SEP_RUN: OnceLock<Regex> = OnceLock::new();
    static SPACE_BEFORE_SEP: OnceLock<Regex> = OnceLock::new();
    let sep_run = SEP_RUN.get_or_init(|| Regex::new(r"([,;])(?:\s*[,;])+").unwrap());
    let space_before = SPACE_BEFORE_SEP.get_or_init(|| Regex::new(r"\s+([,;])").unwrap());

    let collapsed = s.split_whitespace().collect::<Vec<_>>().join(" ");
    let folded = sep_run.replace_all(&collapsed, "$1");
    let tight = space_before.replace_all(&folded, "$1");
    tight.trim_matches(is_trim_char).to_string()
}

fn is_cjk_punct(ch: char) -> bool {
    matches!(
        ch,
        '，' | '。' | '、' | '；' | '：' | '？' | '！' | '“' | '”' | '‘' | '’' | '（' | '）'
            | '《' | '》' | '【' | '】' | '…' | '·' | '\u{2014}' | '「' | '」' | '『' | '』' | '～'
    )
}

/// Characters that can make up a source-language (non-ASCII) word.
pub(crate) fn is_source_word_char(ch: char) -> bool {
    !ch.is_ascii() && !ch.is_whitespace() && !is_cjk_punct(ch)
}

/// A cross-reference found inside a definition string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Reference {
    /// Byte range of the whole reference, marker included.
    pub start: usize,
    pub end: usize,
    /// Headword the reference points at.
    pub target: String,
}

/// Parse the referenced word starting at byte `at`: the maximal run of
/// source-word characters, optionally followed by CEDICT's `|simplified`
/// form and a `[pinyin]` annotation. A full `trad|simp[pinyin]` reference is
/// accepted even when the headword contains ASCII (`U盤|U盘[U pan2]`).
/// Returns the end offset and lookup key.
fn scan_word(s: &str, at: usize) -> Option<(usize, String)> {
    static CANONICAL: OnceLock<Regex> = OnceLock::new();
    let canonical = CANONICAL.get_or_init(|| Regex::new(r"^[^\s|\[\],;/]+\|([^\s|\[\],;/]+)\[[^\]]*\]").unwrap());
    if let Some(c) = canonical.captures(&s[at..]) {
        let simplified = c.get(1).unwrap().as_str();
        if simplified.chars().any(is_source_word_char) {
            return Some((at + c.get(0).unwrap().end(), simplified.to_string()));
        }
    }
    let run = |from: usize| -> usize {
        s[from..]
            .char_indices()
            .find(|&(_, ch)| !is_source_word_char(ch))
            .map(|(i, _)| from + i)
            .unwrap_or(s.len())
    };
    let first_end = run(at);
    if first_end == at {
        return None;
    }
    let mut key = s[at..first_end].to_string();
    let mut end = first_end;
    if s[end..].starts_with('|') {
        let second_end = run(end + 1);
        if second_end > end + 1 {
            key = s[end + 1..second_end].to_string();
            end = second_end;
        }
    }
    if s[end..].starts_with('[') {
        if let Some(close) = s[end..].find(']') {
            end += close + 1;
        }
    }
    Some((end, key))
}

fn find_with(re: &Regex, s: &str) -> Option<Reference> {
    re.find_iter(s).find_map(|m| {
        scan_word(s, m.end()).map(|(end, target)| Reference {
            start: m.start(),
            end,
            target,
        })
    })
}

/// First `abbr. for c` occurrence.
pub(crate) fn find_abbreviation(s: &str) -> Option<Reference> {
    static RE: OnceLock<Regex> = OnceLock::new();
    find_with(RE.get_or_init(|| Regex::new(r"\babbr\. for ").unwrap()), s)
}

/// First `see c` or `see also c` occurrence.
pub(crate) fn find_see_reference(s: &str) -> Option<Reference> {
    static RE: OnceLock<Regex> = OnceLock::new();
    find_with(RE.get_or_init(|| Regex::new(r"\bsee also |\bsee ").unwrap()), s)
}

/// Remove every `abbr. for c` substring.
pub(crate) fn strip_abbreviations(s: &str) -> String {
    let mut cur = s.to_string();
    while let Some(r) = find_abbreviation(&cur) {
        cur.replace_range(r.start..r.end, " ");
    }
    cur
}

/// Tokenizer for dictionary text that is not pre-tokenized: whitespace split
/// with brackets, quotes and clause punctuation split off as separate tokens.
pub fn punct_tokenize(s: &str) -> Vec<String> {
    let mut spaced = String::with_capacity(s.len() + 8);
    for ch in s.chars() {
        if matches!(ch, '(' | ')' | '[' | ']' | '{' | '}' | '"' | ',' | ';' | ':' | '!' | '?') {
            spaced.push(' ');
            spaced.push(ch);
            spaced.push(' ');
        } else {
            spaced.push(ch);
        }
    }
    spaced.split_whitespace().map(str::to_string).collect()
}
