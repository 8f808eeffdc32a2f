use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::sample::normalize;
use super::tokenize::{token_keys, TokenSpan, TokenizedDoc};

/// Mention kinds, declared in graph node order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionKind {
    Subject,
    Reasoning,
    Candidate,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Mention {
    pub entity_key: String,
    pub kind: MentionKind,
    pub doc_id: usize,
    #[serde(rename = "span")]
    pub token_span: TokenSpan,
    #[serde(rename = "sentence")]
    pub sentence_index: usize,
}

impl Mention {
    /// Sort key used for node order: kind, key, document, span.
    pub fn node_order(&self) -> (MentionKind, &str, usize, TokenSpan) {
        (self.kind, &self.entity_key, self.doc_id, self.token_span)
    }

    pub fn co_sentence(&self, other: &Mention) -> bool {
        self.doc_id == other.doc_id && self.sentence_index == other.sentence_index
    }
}

/// Sentence-initial words that never start a reasoning span.
const STOPWORDS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "it", "its", "he", "she", "his", "her", "they", "their", "there",
    "we", "our", "in", "on", "at", "of", "for", "from", "with", "by", "after", "before", "during", "when", "while", "as",
    "and", "but", "or", "if", "although", "however", "since", "until", "some", "many", "most", "all", "one", "both",
];

/// Lowercase tokens allowed inside a capitalized run.
const CONNECTORS: &[&str] = &["of", "the", "&"];

/// Sorts mentions by document and start position; remaining fields break ties.
pub fn sort_mentions(mentions: &mut [Mention]) {
    mentions.sort_by(|a, b| {
        (a.doc_id, a.token_span, a.kind, &a.entity_key).cmp(&(b.doc_id, b.token_span, b.kind, &b.entity_key))
    });
}

/// Exact, case-insensitive token-sequence matching. Matches never cross a
/// sentence boundary; repeated matches of one target are leftmost and
/// non-overlapping, while matches of different targets may overlap.
pub fn find_mentions(doc: &TokenizedDoc, targets: &[(String, MentionKind)]) -> Vec<Mention> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (key, kind) in targets {
        if !seen.insert((key.as_str(), *kind)) {
            continue;
        }
        let pattern = token_keys(key);
        if pattern.is_empty() {
            continue;
        }
        for (sent_idx, &(s_start, s_end)) in doc.sentence_spans.iter().enumerate() {
            let mut pos = s_start;
            while pos + pattern.len() <= s_end {
                if doc.lower[pos..pos + pattern.len()] == pattern[..] {
                    out.push(Mention {
                        entity_key: key.clone(),
                        kind: *kind,
                        doc_id: doc.doc_id,
                        token_span: (pos, pos + pattern.len()),
                        sentence_index: sent_idx,
                    });
                    pos += pattern.len();
                } else {
                    pos += 1;
                }
            }
        }
    }
    sort_mentions(&mut out);
    out
}

fn is_capitalized(tok: &str) -> bool {
    tok.chars().next().is_some_and(|c| c.is_alphabetic() && c.is_uppercase())
}

/// Normalized source text of a token range.
pub fn span_text(doc: &TokenizedDoc, text: &str, span: TokenSpan) -> String {
    normalize(&text[doc.offsets[span.0].0..doc.offsets[span.1 - 1].1])
}

/// Capitalized-run entity recognizer. `text` is the source the document
/// was tokenized from; spans whose key is in `excluded` are dropped.
pub fn detect_reasoning_spans(doc: &TokenizedDoc, text: &str, excluded: &[String]) -> Vec<Mention> {
    let mut out = Vec::new();
    for (sent_idx, &(s_start, s_end)) in doc.sentence_spans.iter().enumerate() {
        let mut pos = s_start;
        while pos < s_end {
            if !is_capitalized(&doc.tokens[pos]) {
                pos += 1;
                continue;
            }
            let mut end = pos + 1;
            loop {
                if end < s_end && is_capitalized(&doc.tokens[end]) {
                    end += 1;
                } else if end + 1 < s_end
                    && CONNECTORS.contains(&doc.lower[end].as_str())
                    && is_capitalized(&doc.tokens[end + 1])
                {
                    end += 2;
                } else {
                    break;
                }
            }
            let mut start = pos;
            if start == s_start && STOPWORDS.contains(&doc.lower[start].as_str()) {
                start += 1;
                while start < end && !is_capitalized(&doc.tokens[start]) {
                    start += 1;
                }
            }
            if start < end {
                let key = span_text(doc, text, (start, end));
                if !key.is_empty() && !excluded.contains(&key) {
                    out.push(Mention {
                        entity_key: key,
                        kind: MentionKind::Reasoning,
                        doc_id: doc.doc_id,
                        token_span: (start, end),
                        sentence_index: sent_idx,
                    });
                }
            }
            pos = end;
        }
    }
    out
}
