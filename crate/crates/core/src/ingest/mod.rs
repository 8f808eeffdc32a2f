//! Sample parsing, tokenization and mention detection.

mod mentions;
mod sample;
mod tokenize;

use serde::{Deserialize, Serialize};

pub use mentions::{
    detect_reasoning_spans, find_mentions, sort_mentions, span_text, Mention, MentionKind,
};
pub use sample::{
    normalize, parse_sample, parse_samples, read_jsonl, read_samples, write_jsonl, write_samples, Question, Sample,
};
pub use tokenize::{token_keys, tokenize, tokenize_and_split, TokenSpan, TokenizedDoc};

/// A sample with its documents tokenized and all mentions located.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenizedSample {
    pub sample: Sample,
    pub docs: Vec<TokenizedDoc>,
    /// Sorted by document, then start position.
    pub mentions: Vec<Mention>,
}

/// Tokenizes every support and finds subject, candidate and reasoning mentions.
pub fn ingest_sample(sample: &Sample) -> TokenizedSample {
    let mut targets = Vec::with_capacity(sample.candidates.len() + 1);
    if !sample.question.subject.is_empty() {
        targets.push((sample.question.subject.clone(), MentionKind::Subject));
    }
    for c in &sample.candidates {
        targets.push((c.clone(), MentionKind::Candidate));
    }
    let excluded: Vec<String> = targets.iter().map(|(k, _)| k.clone()).collect();

    let mut docs = Vec::with_capacity(sample.supports.len());
    let mut mentions = Vec::new();
    for (doc_id, text) in sample.supports.iter().enumerate() {
        let doc = tokenize_and_split(text, doc_id);
        mentions.extend(find_mentions(&doc, &targets));
        mentions.extend(detect_reasoning_spans(&doc, text, &excluded));
        docs.push(doc);
    }
    sort_mentions(&mut mentions);
    TokenizedSample {
        sample: sample.clone(),
        docs,
        mentions,
    }
}
