//! Rule-based tokenizer and sentence splitter.
//!
//! Tokens are maximal runs of alphanumeric characters or single punctuation
//! characters. A sentence ends at `.`, `!` or `?` when the next token is
//! separated by whitespace and starts with an uppercase letter, or when the
//! text ends. A period directly after a known abbreviation or a single
//! capital initial does not end a sentence.

use serde::{Deserialize, Serialize};

/// Half-open token range `[start, end)`.
pub type TokenSpan = (usize, usize);

const ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "prof", "st", "jr", "sr", "inc", "ltd", "co", "corp", "vs", "etc", "gen", "col", "lt",
    "sgt", "capt", "rev", "hon", "mt", "ft", "fig", "jan", "feb", "mar", "apr", "aug", "sep", "sept", "oct", "nov",
    "dec", "approx", "dept", "est", "univ",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub doc_id: usize,
    pub tokens: Vec<String>,
    /// Lowercased copy of `tokens`.
    pub lower: Vec<String>,
    /// Byte offsets of each token in the source text.
    pub offsets: Vec<(usize, usize)>,
    pub sentence_spans: Vec<TokenSpan>,
}

impl TokenizedDoc {
    /// Index of the sentence containing token `pos`.
    pub fn sentence_of(&self, pos: usize) -> Option<usize> {
        let idx = self.sentence_spans.partition_point(|&(_, end)| end <= pos);
        (idx < self.sentence_spans.len() && self.sentence_spans[idx].0 <= pos).then_some(idx)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Splits `text` into `(token, byte_start, byte_end)` triples.
pub fn tokenize(text: &str) -> Vec<(String, usize, usize)> {
    let mut out = Vec::new();
    let mut run_start: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            run_start.get_or_insert(i);
            continue;
        }
        if let Some(s) = run_start.take() {
            out.push((text[s..i].to_string(), s, i));
        }
        if !ch.is_whitespace() {
            let end = i + ch.len_utf8();
            out.push((text[i..end].to_string(), i, end));
        }
    }
    if let Some(s) = run_start {
        out.push((text[s..].to_string(), s, text.len()));
    }
    out
}

/// Lowercased token sequence of `text`.
pub fn token_keys(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|(t, _, _)| t.to_lowercase()).collect()
}

fn is_terminal(tok: &str) -> bool {
    matches!(tok, "." | "!" | "?")
}

fn starts_uppercase(tok: &str) -> bool {
    tok.chars().next().is_some_and(char::is_uppercase)
}

fn suppresses_period(prev: &str) -> bool {
    let lower = prev.to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return true;
    }
    let mut chars = prev.chars();
    matches!((chars.next(), chars.next()), (Some(c), None) if c.is_uppercase())
}

pub fn tokenize_and_split(text: &str, doc_id: usize) -> TokenizedDoc {
    let raw = tokenize(text);
    let n = raw.len();
    let mut sentence_spans = Vec::new();
    let mut start = 0;
    for i in 0..n {
        let (tok, tok_start, tok_end) = &raw[i];
        if !is_terminal(tok) {
            continue;
        }
        let ends = if i + 1 == n {
            true
        } else {
            let (next, next_start, _) = &raw[i + 1];
            let gap = &text[*tok_end..*next_start];
            !gap.is_empty() && gap.chars().all(char::is_whitespace) && starts_uppercase(next)
        };
        let abbreviated = tok == "."
            && i > 0
            && raw[i - 1].2 == *tok_start
            && suppresses_period(&raw[i - 1].0)
            && i + 1 < n;
        if ends && !abbreviated {
            sentence_spans.push((start, i + 1));
            start = i + 1;
        }
    }
    if start < n {
        sentence_spans.push((start, n));
    }
    let lower = raw.iter().map(|(t, _, _)| t.to_lowercase()).collect();
    let offsets = raw.iter().map(|&(_, s, e)| (s, e)).collect();
    TokenizedDoc {
        doc_id,
        tokens: raw.into_iter().map(|(t, _, _)| t).collect(),
        lower,
        offsets,
        sentence_spans,
    }
}
