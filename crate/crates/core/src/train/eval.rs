use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::model::{Model, PreparedSample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BucketFn {
    DocCount,
    HopCount,
}

impl BucketFn {
    pub fn label(self, s: &PreparedSample) -> String {
        match self {
            BucketFn::DocCount => doc_count_bucket(s.num_docs).to_string(),
            BucketFn::HopCount => s.min_path_docs.map_or_else(|| "none".to_string(), |h| h.to_string()),
        }
    }

    /// Buckets in display order.
    pub fn order(self, labels: &mut [String]) {
        match self {
            BucketFn::DocCount => {
                labels.sort_by_key(|l| DOC_BUCKETS.iter().position(|b| b == l).unwrap_or(usize::MAX))
            }
            BucketFn::HopCount => labels.sort_by_key(|l| l.parse::<usize>().unwrap_or(usize::MAX)),
        }
    }
}

const DOC_BUCKETS: [&str; 5] = ["1-4", "5-8", "9-12", "13-16", ">16"];

pub fn doc_count_bucket(n: usize) -> &'static str {
    match n {
        0..=4 => DOC_BUCKETS[0],
        5..=8 => DOC_BUCKETS[1],
        9..=12 => DOC_BUCKETS[2],
        13..=16 => DOC_BUCKETS[3],
        _ => DOC_BUCKETS[4],
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketStat {
    pub bucket: String,
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Labelled samples scored.
    pub total: usize,
    pub correct: usize,
    /// Samples scored as incorrect without a usable prediction, by reason.
    pub unanswerable: BTreeMap<String, usize>,
    /// Samples without a label, left out of the accuracy.
    pub unlabeled: usize,
    pub buckets: Vec<BucketStat>,
}

/// Outcome for one labelled sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub correct: bool,
    pub predicted: Option<usize>,
    pub reason: Option<String>,
}

fn reason_code(e: &Error) -> String {
    match e {
        Error::NoCandidateNodes => "no_candidate_nodes".into(),
        Error::IsolatedNode(_) => "isolated_node".into(),
        Error::EmptyQuestion => "empty_question".into(),
        Error::AllMasked => "all_masked".into(),
        _ => "model_error".into(),
    }
}

/// Scores one labelled sample. An answer without a mention node is scored
/// incorrect whatever the model predicts.
pub fn score_sample(model: &Model, s: &PreparedSample) -> Option<Scored> {
    let answer = s.answer?;
    let scored = match model.predict(s) {
        Err(e) => Scored {
            correct: false,
            predicted: None,
            reason: Some(reason_code(&e)),
        },
        Ok(p) if !s.answer_in_graph() => Scored {
            correct: false,
            predicted: Some(p.predicted),
            reason: Some("answer_not_in_graph".into()),
        },
        Ok(p) => Scored {
            correct: p.predicted == answer,
            predicted: Some(p.predicted),
            reason: None,
        },
    };
    Some(scored)
}

pub fn evaluate(model: &Model, data: &[PreparedSample]) -> EvalReport {
    evaluate_with(model, data, None)
}

pub fn analyze_by_bucket(model: &Model, data: &[PreparedSample], bucket_fn: BucketFn) -> EvalReport {
    evaluate_with(model, data, Some(bucket_fn))
}

fn evaluate_with(model: &Model, data: &[PreparedSample], bucket_fn: Option<BucketFn>) -> EvalReport {
    let scored: Vec<Option<Scored>> = data.par_iter().map(|s| score_sample(model, s)).collect();
    let mut report = EvalReport {
        accuracy: 0.0,
        total: 0,
        correct: 0,
        unanswerable: BTreeMap::new(),
        unlabeled: 0,
        buckets: Vec::new(),
    };
    let mut buckets: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (s, outcome) in data.iter().zip(scored) {
        let Some(outcome) = outcome else {
            report.unlabeled += 1;
            continue;
        };
        report.total += 1;
        report.correct += usize::from(outcome.correct);
        if let Some(r) = outcome.reason {
            *report.unanswerable.entry(r).or_default() += 1;
        }
        if let Some(f) = bucket_fn {
            let e = buckets.entry(f.label(s)).or_default();
            e.0 += 1;
            e.1 += usize::from(outcome.correct);
        }
    }
    report.accuracy = ratio(report.correct, report.total);
    if let Some(f) = bucket_fn {
        let mut labels: Vec<String> = buckets.keys().cloned().collect();
        f.order(&mut labels);
        report.buckets = labels
            .into_iter()
            .map(|bucket| {
                let (count, correct) = buckets[&bucket];
                BucketStat {
                    bucket,
                    count,
                    correct,
                    accuracy: ratio(correct, count),
                }
            })
            .collect();
    }
    report
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doc_buckets() {
        let cases = [(1, "1-4"), (4, "1-4"), (5, "5-8"), (12, "9-12"), (16, "13-16"), (17, ">16"), (99, ">16")];
        for (n, label) in cases {
            assert_eq!(doc_count_bucket(n), label);
        }
    }

    #[test]
    fn bucket_order() {
        let mut labels: Vec<String> = [">16", "1-4", "13-16", "5-8"].iter().map(|s| s.to_string()).collect();
        BucketFn::DocCount.order(&mut labels);
        assert_eq!(labels, ["1-4", "5-8", "13-16", ">16"]);
        let mut hops: Vec<String> = ["none", "3", "10", "2"].iter().map(|s| s.to_string()).collect();
        BucketFn::HopCount.order(&mut hops);
        assert_eq!(hops, ["2", "3", "10", "none"]);
    }
}
