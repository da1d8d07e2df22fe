//! Rule-based cleaning of bulletin and tweet text.
//!
//! The document pipeline runs, in order: URL/phone removal, spaced-letter run
//! removal, repeat collapsing, punctuation stripping, stopword removal,
//! short-line dropping and a final whitespace normalization. The sequence is
//! repeated until the text stops changing, so [`clean_text`] is idempotent and
//! every rule is sound on its output.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::ingest::{RawDocument, SourceKind, TagRef};
use crate::text::canonical;

pub const URL_RULE: &str = "url/scheme-or-www/v1";
pub const PHONE_RULE: &str = "phone/fr-10-digit/v1";
pub const SPACED_LETTERS_RULE: &str = "spaced-letters/upper-run-4/v1";
pub const STOPWORDS_FR_VERSION: &str = "stopwords-fr/v1";

/// Minimum number of single uppercase letters forming a removable run.
pub const SPACED_RUN_MIN: usize = 4;

const MAX_PASSES: usize = 64;

static STOPWORDS_FR: &str = include_str!("../assets/stopwords_fr.txt");

/// The bundled French stopword list, canonicalized.
pub fn french_stopwords() -> BTreeSet<String> {
    parse_stopword_list(STOPWORDS_FR)
}

/// Parse a stopword asset: one word per line, blank lines ignored.
pub fn parse_stopword_list(text: &str) -> BTreeSet<String> {
    text.lines().map(canonical).filter(|w| !w.is_empty()).collect()
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("min_line_words must be at least 1")]
    MinLineWords,
    #[error("unknown {kind} rule {id:?}")]
    UnknownRule { kind: &'static str, id: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningConfig {
    pub stopword_list: BTreeSet<String>,
    pub min_line_words: usize,
    pub remove_stopwords: bool,
    pub strip_punctuation: bool,
    pub remove_spaced_runs: bool,
    pub collapse_repeats: bool,
    pub drop_short_lines: bool,
    pub url_pattern: String,
    pub phone_pattern: String,
    pub spaced_letters_pattern: String,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self::classification()
    }
}

impl CleaningConfig {
    /// Full rule set with stopword removal; used for classification datasets.
    pub fn classification() -> Self {
        Self {
            stopword_list: french_stopwords(),
            min_line_words: 3,
            remove_stopwords: true,
            strip_punctuation: true,
            remove_spaced_runs: true,
            collapse_repeats: true,
            drop_short_lines: true,
            url_pattern: URL_RULE.into(),
            phone_pattern: PHONE_RULE.into(),
            spaced_letters_pattern: SPACED_LETTERS_RULE.into(),
        }
    }

    /// Full rule set, stopwords retained; used for the language-model corpus.
    pub fn lm_corpus() -> Self {
        Self { remove_stopwords: false, ..Self::classification() }
    }

    /// URL/phone removal and whitespace normalization only.
    pub fn tweet() -> Self {
        Self {
            remove_stopwords: false,
            strip_punctuation: false,
            remove_spaced_runs: false,
            collapse_repeats: false,
            drop_short_lines: false,
            ..Self::classification()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.min_line_words < 1 {
            return Err(ConfigError::MinLineWords);
        }
        for (kind, id, known) in [
            ("url", &self.url_pattern, URL_RULE),
            ("phone", &self.phone_pattern, PHONE_RULE),
            ("spaced-letters", &self.spaced_letters_pattern, SPACED_LETTERS_RULE),
        ] {
            if id != known {
                return Err(ConfigError::UnknownRule { kind, id: id.clone() });
            }
        }
        Ok(())
    }

    /// Same config with the stopword list brought to canonical form.
    pub fn canonicalized(mut self) -> Self {
        self.stopword_list = self.stopword_list.iter().map(|w| canonical(w)).filter(|w| !w.is_empty()).collect();
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovedStats {
    pub urls: usize,
    pub phones: usize,
    pub short_lines: usize,
    pub spaced_runs: usize,
    pub stopwords: usize,
}

impl std::ops::AddAssign for RemovedStats {
    fn add_assign(&mut self, o: Self) {
        self.urls += o.urls;
        self.phones += o.phones;
        self.short_lines += o.short_lines;
        self.spaced_runs += o.spaced_runs;
        self.stopwords += o.stopwords;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleanedDocument {
    pub id: String,
    pub source_kind: SourceKind,
    pub text: String,
    pub word_count: usize,
    #[serde(default)]
    pub tags: BTreeSet<TagRef>,
    pub removed_stats: RemovedStats,
    /// Set when cleaning removed all content.
    #[serde(default)]
    pub empty: bool,
}

fn url_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(?:https?://|ftp://|www\.)\S*").unwrap())
}

fn phone_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:\+33[ .\-]?[1-9]|0[1-9])(?:[ .\-]?[0-9]{2}){4}").unwrap())
}

fn is_hspace(c: char) -> bool {
    c.is_whitespace() && c != '\n'
}

/// Remove `ranges` (sorted, disjoint byte ranges) from `text`, merging the
/// horizontal whitespace around each removal into at most one space.
fn remove_spans(text: &str, ranges: &[(usize, usize)]) -> String {
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for &(start, end) in ranges {
        out.push_str(&text[cursor..start]);
        let had_space_before = out.ends_with(is_hspace);
        while out.ends_with(is_hspace) {
            out.pop();
        }
        let rest = &text[end..];
        let trimmed = rest.trim_start_matches(is_hspace);
        let had_space_after = trimmed.len() != rest.len();
        cursor = end + (rest.len() - trimmed.len());
        let left_open = out.is_empty() || out.ends_with('\n');
        let right_open = trimmed.is_empty() || trimmed.starts_with('\n');
        if !left_open && !right_open && (had_space_before || had_space_after) {
            out.push(' ');
        }
    }
    out.push_str(&text[cursor..]);
    out
}

fn phone_spans(text: &str) -> Vec<(usize, usize)> {
    let re = phone_regex();
    let mut spans = Vec::new();
    let mut pos = 0;
    while pos <= text.len() {
        let Some(m) = re.find_at(text, pos) else { break };
        let digit_before = text[..m.start()].chars().next_back().is_some_and(|c| c.is_ascii_digit());
        let digit_after = text[m.end()..].chars().next().is_some_and(|c| c.is_ascii_digit());
        if digit_before || digit_after {
            pos = m.start() + text[m.start()..].chars().next().map_or(1, char::len_utf8);
        } else {
            spans.push((m.start(), m.end()));
            pos = m.end();
        }
    }
    spans
}

fn strip_urls_phones_counted(text: &str) -> (String, usize, usize) {
    let mut cur = text.to_owned();
    let (mut urls, mut phones) = (0, 0);
    loop {
        let url_spans: Vec<_> = url_regex().find_iter(&cur).map(|m| (m.start(), m.end())).collect();
        if !url_spans.is_empty() {
            urls += url_spans.len();
            cur = remove_spans(&cur, &url_spans);
            continue;
        }
        let spans = phone_spans(&cur);
        if spans.is_empty() {
            return (cur, urls, phones);
        }
        phones += spans.len();
        cur = remove_spans(&cur, &spans);
    }
}

/// Remove URLs (scheme- or `www.`-prefixed) and French phone numbers.
pub fn strip_urls_phones(text: &str) -> String {
    strip_urls_phones_counted(text).0
}

fn drop_short_lines_counted(text: &str, min_line_words: usize) -> (String, usize) {
    let mut dropped = 0;
    let kept: Vec<&str> = text
        .split('\n')
        .filter(|line| {
            let keep = line.split_whitespace().count() >= min_line_words;
            dropped += usize::from(!keep);
            keep
        })
        .collect();
    (kept.join("\n"), dropped)
}

/// Delete every line with fewer than `min_line_words` words.
pub fn drop_short_lines(text: &str, min_line_words: usize) -> String {
    drop_short_lines_counted(text, min_line_words).0
}

fn is_spaced_letter(token: &str) -> bool {
    let mut chars = token.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if c.is_alphabetic() && c.is_uppercase())
}

fn remove_spaced_letter_runs_counted(text: &str) -> (String, usize) {
    // Alternating (separator, token) segmentation; seps[i] precedes tokens[i],
    // seps[n] trails the last token.
    let mut tokens: Vec<&str> = Vec::new();
    let mut seps: Vec<&str> = Vec::new();
    let mut rest = text;
    loop {
        let tok_start = rest.find(|c: char| !c.is_whitespace()).unwrap_or(rest.len());
        seps.push(&rest[..tok_start]);
        rest = &rest[tok_start..];
        if rest.is_empty() {
            break;
        }
        let tok_end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        tokens.push(&rest[..tok_end]);
        rest = &rest[tok_end..];
    }

    let mut remove = vec![false; tokens.len()];
    let mut runs = 0;
    let mut i = 0;
    while i < tokens.len() {
        if is_spaced_letter(tokens[i]) {
            let mut j = i;
            while j < tokens.len() && is_spaced_letter(tokens[j]) {
                j += 1;
            }
            if j - i >= SPACED_RUN_MIN {
                remove[i..j].iter_mut().for_each(|r| *r = true);
                runs += 1;
            }
            i = j;
        } else {
            i += 1;
        }
    }
    if runs == 0 {
        return (text.to_owned(), 0);
    }

    let mut out = String::with_capacity(text.len());
    let mut pending_sep: Option<&str> = Some(seps[0]);
    let mut pending_newline = false;
    for (k, tok) in tokens.iter().enumerate() {
        if remove[k] {
            if let Some(s) = pending_sep.take() {
                pending_newline |= s.contains('\n');
            }
            pending_newline |= seps[k + 1].contains('\n');
            continue;
        }
        match pending_sep.take() {
            Some(s) if !pending_newline => out.push_str(s),
            Some(_) | None => {
                if !out.is_empty() {
                    out.push(if pending_newline { '\n' } else { ' ' });
                }
            }
        }
        pending_newline = false;
        out.push_str(tok);
        pending_sep = Some(seps[k + 1]);
    }
    if let Some(s) = pending_sep {
        if !pending_newline {
            out.push_str(s);
        }
    }
    (out, runs)
}

/// Remove maximal runs of at least four whitespace-separated single uppercase
/// letters (vertically spelled headers such as "B U L L E T I N").
pub fn remove_spaced_letter_runs(text: &str) -> String {
    remove_spaced_letter_runs_counted(text).0
}

/// Collapse `..`, `??` and `!!` runs to one character, whitespace runs within a
/// line to one space, and blank-line runs to a single line break.
pub fn collapse_repeats(text: &str) -> String {
    let mut lines = Vec::new();
    for line in text.split('\n') {
        if line.trim().is_empty() {
            continue;
        }
        let mut out = String::with_capacity(line.len());
        let mut prev: Option<char> = None;
        for c in line.chars() {
            let c = if is_hspace(c) { ' ' } else { c };
            let repeat = prev == Some(c) && matches!(c, '.' | '?' | '!' | ' ');
            if !repeat {
                out.push(c);
            }
            prev = Some(c);
        }
        lines.push(out);
    }
    lines.join("\n")
}

fn is_punctuation(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
    )
}

/// Replace punctuation with spaces, keeping hyphens between two alphanumeric
/// characters. Apostrophes become word boundaries ("l'eau" -> "l eau").
pub fn strip_punctuation(text: &str) -> String {
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    for (i, &c) in chars.iter().enumerate() {
        if !is_punctuation(c) {
            out.push(c);
            continue;
        }
        let intra_hyphen = matches!(c, '-' | '\u{2010}' | '\u{2011}')
            && i > 0
            && chars[i - 1].is_alphanumeric()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
        out.push(if intra_hyphen { c } else { ' ' });
    }
    out
}

fn remove_stopwords_counted(text: &str, stopwords: &BTreeSet<String>) -> (String, usize) {
    if stopwords.is_empty() {
        return (text.to_owned(), 0);
    }
    let mut removed = 0;
    let lines: Vec<String> = text
        .split('\n')
        .map(|line| {
            line.split_whitespace()
                .filter(|tok| {
                    let hit = stopwords.contains(&canonical(tok));
                    removed += usize::from(hit);
                    !hit
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    (lines.join("\n"), removed)
}

/// Delete tokens whose canonical form is a stopword. An empty list is the
/// identity.
pub fn remove_stopwords(text: &str, stopwords: &BTreeSet<String>) -> String {
    remove_stopwords_counted(text, stopwords).0
}

/// Per line whitespace collapse and trim; blank lines dropped.
pub fn normalize_whitespace(text: &str) -> String {
    text.split('\n')
        .map(crate::text::collapse_ws)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

fn clean_pass(text: &str, cfg: &CleaningConfig, stats: &mut RemovedStats) -> String {
    let (mut cur, urls, phones) = strip_urls_phones_counted(text);
    stats.urls += urls;
    stats.phones += phones;
    if cfg.remove_spaced_runs {
        let (t, runs) = remove_spaced_letter_runs_counted(&cur);
        cur = t;
        stats.spaced_runs += runs;
    }
    if cfg.collapse_repeats {
        cur = collapse_repeats(&cur);
    }
    if cfg.strip_punctuation {
        cur = strip_punctuation(&cur);
    }
    if cfg.remove_stopwords {
        let (t, n) = remove_stopwords_counted(&cur, &cfg.stopword_list);
        cur = t;
        stats.stopwords += n;
    }
    if cfg.drop_short_lines {
        // blank lines are layout, not table rows
        let nonblank = normalize_whitespace(&cur);
        let (t, n) = drop_short_lines_counted(&nonblank, cfg.min_line_words);
        cur = t;
        stats.short_lines += n;
    }
    normalize_whitespace(&cur)
}

/// Run the full rule pipeline to a fixed point.
pub fn clean_text(text: &str, cfg: &CleaningConfig) -> (String, RemovedStats) {
    let mut stats = RemovedStats::default();
    let mut cur = clean_pass(text, cfg, &mut stats);
    for _ in 0..MAX_PASSES {
        let next = clean_pass(&cur, cfg, &mut stats);
        if next == cur {
            break;
        }
        cur = next;
    }
    (cur, stats)
}

pub fn clean_document(doc: &RawDocument, cfg: &CleaningConfig) -> CleanedDocument {
    let (text, removed_stats) = clean_text(&doc.text, cfg);
    CleanedDocument {
        id: doc.id.clone(),
        source_kind: doc.source_kind,
        word_count: crate::text::word_count(&text),
        empty: text.is_empty(),
        tags: doc.tags.clone(),
        text,
        removed_stats,
    }
}

/// Clean a corpus in parallel on the current rayon pool; output order matches
/// input order.
pub fn clean_corpus(docs: &[RawDocument], cfg: &CleaningConfig) -> Vec<CleanedDocument> {
    use rayon::prelude::*;
    docs.par_iter().map(|d| clean_document(d, cfg)).collect()
}
