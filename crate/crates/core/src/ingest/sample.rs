use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::tokenize::token_keys;
use crate::error::{Error, Result};

/// Query tuple `⟨subject, relation, ?⟩` with its token linearization.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub subject: String,
    pub relation: String,
    /// Relation tokens followed by subject tokens.
    pub tokens: Vec<String>,
}

impl Question {
    pub fn new(relation: &str, subject: &str) -> Result<Self> {
        let relation_words = relation.replace('_', " ");
        let mut tokens = token_keys(&relation_words);
        tokens.extend(token_keys(subject));
        if tokens.is_empty() {
            return Err(Error::EmptyQuestion);
        }
        Ok(Self {
            subject: normalize(subject),
            relation: relation.to_string(),
            tokens,
        })
    }

    /// The raw query string, relation first.
    pub fn query(&self) -> String {
        if self.subject.is_empty() {
            self.relation.clone()
        } else {
            format!("{} {}", self.relation, self.subject)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub question: Question,
    pub supports: Vec<String>,
    /// Normalized candidate strings, in record order.
    pub candidates: Vec<String>,
    pub answer: Option<String>,
}

impl Sample {
    /// Position of the answer within `candidates`.
    pub fn answer_index(&self) -> Option<usize> {
        let answer = self.answer.as_ref()?;
        self.candidates.iter().position(|c| c == answer)
    }

    pub fn to_record(&self) -> Value {
        let mut record = json!({
            "id": self.id,
            "query": self.question.query(),
            "supports": self.supports,
            "candidates": self.candidates,
        });
        if let Some(a) = &self.answer {
            record["answer"] = json!(a);
        }
        record
    }
}

/// Lowercase, collapse whitespace, strip leading and trailing punctuation.
pub fn normalize(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
    collapsed.trim_matches(|c: char| !c.is_alphanumeric()).to_string()
}

fn string_field(record: &Value, field: &'static str) -> Result<String> {
    match record.get(field) {
        None | Some(Value::Null) => Err(Error::MissingField(field)),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Number(n)) if field == "id" => Ok(n.to_string()),
        Some(_) => Err(Error::FieldType {
            field,
            expected: "string",
        }),
    }
}

fn string_list(record: &Value, field: &'static str) -> Result<Vec<String>> {
    let items = record
        .get(field)
        .ok_or(Error::MissingField(field))?
        .as_array()
        .ok_or(Error::FieldType {
            field,
            expected: "array of strings",
        })?;
    items
        .iter()
        .map(|v| {
            v.as_str().map(str::to_string).ok_or(Error::FieldType {
                field,
                expected: "array of strings",
            })
        })
        .collect()
}

/// Parses one record with fields `id`, `query`, `supports`, `candidates`
/// and optional `answer`. The query's first whitespace-delimited token is
/// the relation; the remainder is the subject.
pub fn parse_sample(record: &Value) -> Result<Sample> {
    let id = string_field(record, "id")?;
    let query = string_field(record, "query")?;
    let supports = string_list(record, "supports")?;
    let raw_candidates = string_list(record, "candidates")?;
    let answer = match record.get("answer") {
        None | Some(Value::Null) => None,
        Some(_) => Some(normalize(&string_field(record, "answer")?)),
    };

    let mut parts = query.trim().splitn(2, char::is_whitespace);
    let relation = parts.next().filter(|r| !r.is_empty()).ok_or_else(|| Error::EmptyQuery(id.clone()))?;
    let subject = parts.next().unwrap_or("").trim();
    let question = Question::new(relation, subject)?;

    if supports.is_empty() {
        return Err(Error::EmptySupports(id));
    }
    let candidates: Vec<String> = raw_candidates.iter().map(|c| normalize(c)).collect();
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates(id));
    }
    if let Some(a) = &answer {
        if !candidates.contains(a) {
            return Err(Error::AnswerNotCandidate { id, answer: a.clone() });
        }
    }
    Ok(Sample {
        id,
        question,
        supports,
        candidates,
        answer,
    })
}

/// Reads samples from line-delimited JSON, or from a single top-level JSON
/// array (the layout of the public WikiHop release).
pub fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    parse_samples(&text)
}

pub fn parse_samples(text: &str) -> Result<Vec<Sample>> {
    if text.trim_start().starts_with('[') {
        let records: Vec<Value> = serde_json::from_str(text)?;
        return records
            .iter()
            .enumerate()
            .map(|(i, r)| parse_sample(r).map_err(|e| e.at_line(i + 1)))
            .collect();
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(line).map_err(|e| Error::from(e).at_line(i + 1))?;
        out.push(parse_sample(&value).map_err(|e| e.at_line(i + 1))?);
    }
    Ok(out)
}

pub fn write_samples(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in samples {
        serde_json::to_writer(&mut w, &s.to_record())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads any line-delimited JSON file of serde-deserializable records.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::from(e).at_line(i + 1))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ellis_record() -> Value {
        json!({
            "id": "WH_dev_0",
            "query": "place_of_death alexander john ellis",
            "supports": ["Alexander John Ellis, was an English mathematician."],
            "candidates": ["college park", "france", "Kensington", "London"],
            "answer": "kensington",
        })
    }

    #[test]
    fn splits_query_into_relation_and_subject() {
        let s = parse_sample(&ellis_record()).unwrap();
        assert_eq!(s.question.subject, "alexander john ellis");
        assert_eq!(s.question.relation, "place_of_death");
        assert_eq!(s.answer.as_deref(), Some("kensington"));
        assert_eq!(s.candidates, ["college park", "france", "kensington", "london"]);
        assert_eq!(s.question.tokens, ["place", "of", "death", "alexander", "john", "ellis"]);
        assert_eq!(s.answer_index(), Some(2));
    }

    #[test]
    fn missing_supports_is_named() {
        let mut r = ellis_record();
        r.as_object_mut().unwrap().remove("supports");
        let err = parse_sample(&r).unwrap_err();
        assert!(matches!(err, Error::MissingField("supports")));
        assert!(err.to_string().contains("supports"));
    }

    #[test]
    fn empty_candidates_rejected() {
        let mut r = ellis_record();
        r["candidates"] = json!([]);
        r.as_object_mut().unwrap().remove("answer");
        assert!(matches!(parse_sample(&r), Err(Error::EmptyCandidates(_))));
    }

    #[test]
    fn answer_must_be_a_candidate() {
        let mut r = ellis_record();
        r["answer"] = json!("paris");
        assert!(matches!(parse_sample(&r), Err(Error::AnswerNotCandidate { .. })));
    }

    #[test]
    fn blind_samples_have_no_answer() {
        let mut r = ellis_record();
        r.as_object_mut().unwrap().remove("answer");
        assert_eq!(parse_sample(&r).unwrap().answer, None);
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize("  Kensington   &  Chelsea, "), "kensington & chelsea");
        assert_eq!(normalize("\"London\""), "london");
        assert_eq!(normalize("St. Mary's"), "st. mary's");
    }

    #[test]
    fn reads_array_and_line_layouts() {
        let one = ellis_record().to_string();
        let lines = format!("{one}\n\n{one}\n");
        assert_eq!(parse_samples(&lines).unwrap().len(), 2);
        let array = format!("[{one}, {one}, {one}]");
        assert_eq!(parse_samples(&array).unwrap().len(), 3);
        let bad = format!("{one}\n{{\"id\": \"x\"}}\n");
        let err = parse_samples(&bad).unwrap_err();
        assert!(err.to_string().starts_with("line 2"));
    }
}
