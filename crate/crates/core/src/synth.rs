//! Multi-hop corpora with known reasoning chains.
//!
//! A sample asks for the end of a chain `s → e_1 → … → e_l → a`. Each link
//! is a one-sentence fact in its own document. Distractor documents attach
//! some non-answer candidates ("decoys") to `e_{l-1}` (the subject when
//! `l = 1`), so they are reachable from the subject by a shorter chain than
//! the answer; the remaining distractor candidates hang off fresh entities
//! that no chain reaches.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{normalize, MentionKind, Question, Sample, TokenSpan};

/// Relation phrases used to render facts.
pub const TEMPLATES: &[&str] = &["is buried in", "is located in", "is part of", "was founded near", "is close to"];

/// Query relations; drawn independently of the chain so they carry no signal.
pub const QUERY_RELATIONS: &[&str] = &[
    "located_in_the_administrative_territorial_entity",
    "place_of_burial",
    "part_of",
    "country",
];

/// Filler sentences. Each starts with a stopword and holds no other capital.
pub const FILLERS: &[&str] = &[
    "The weather was mild that year",
    "Many visitors came in the spring",
    "It was described in an old survey",
    "Some records were lost over time",
    "The road was widened later on",
];

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "h"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
const VOCAB_SEED: u64 = 0x005e_ed0f_7e57;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub num_samples: usize,
    pub num_candidates: usize,
    /// Reasoning entities on the gold chain.
    pub hop_depth: usize,
    pub num_distractor_docs: usize,
    /// Number of distinct name words available.
    pub vocab_size: usize,
    pub seed: u64,
    /// No sentence links the subject and the answer directly.
    pub strict: bool,
    /// Join the facts of each distractor document into one sentence.
    pub multi_fact: bool,
    /// Distractor candidates attached to the chain; defaults to one per
    /// distractor document.
    pub decoys: Option<usize>,
    /// Filler sentences inserted into every document.
    pub filler_sentences: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_samples: 100,
            num_candidates: 5,
            hop_depth: 2,
            num_distractor_docs: 3,
            vocab_size: 2000,
            seed: 7,
            strict: true,
            multi_fact: false,
            decoys: None,
            filler_sentences: 0,
        }
    }
}

impl SynthSpec {
    /// The strict 2-hop task with `n` samples.
    pub fn strict_two_hop(num_samples: usize, seed: u64) -> Self {
        Self {
            num_samples,
            seed,
            ..Self::default()
        }
    }

    pub fn num_decoys(&self) -> usize {
        self.decoys
            .unwrap_or(self.num_distractor_docs)
            .min(self.num_candidates.saturating_sub(1))
    }

    /// Distinct entities per sample: chain, distractor candidates and one
    /// unrelated head per non-decoy distractor.
    pub fn entities_per_sample(&self) -> usize {
        let distractors = self.num_candidates - 1;
        self.hop_depth + 2 + distractors + (distractors - self.num_decoys())
    }

    /// Documents a gold path spans.
    pub fn gold_path_docs(&self) -> usize {
        self.hop_depth + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_candidates < 2 {
            return Err(Error::Config("num_candidates must be at least 2".into()));
        }
        if !(1..=3).contains(&self.hop_depth) {
            return Err(Error::Config("hop_depth must be 1, 2 or 3".into()));
        }
        if self.num_distractor_docs == 0 {
            return Err(Error::Config("num_distractor_docs must be at least 1".into()));
        }
        if let Some(d) = self.decoys {
            if d > self.num_candidates - 1 {
                return Err(Error::Config(format!(
                    "decoys ({d}) exceeds the number of distractor candidates ({})",
                    self.num_candidates - 1
                )));
            }
        }
        let needed = 2 * self.entities_per_sample();
        if needed > self.vocab_size {
            return Err(Error::VocabExhausted {
                needed,
                vocab_size: self.vocab_size,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactRole {
    Gold,
    Decoy,
    Unrelated,
    Shortcut,
}

/// `head relation tail`, rendered with display names.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub role: FactRole,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PlannedSentence {
    Facts { facts: Vec<Fact> },
    Filler { text: String },
}

impl PlannedSentence {
    pub fn render(&self) -> String {
        match self {
            PlannedSentence::Facts { facts } => {
                let parts: Vec<String> =
                    facts.iter().map(|f| format!("{} {} {}", f.head, f.relation, f.tail)).collect();
                format!("{}.", parts.join(" and "))
            }
            PlannedSentence::Filler { text } => format!("{text}."),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocPlan {
    /// True for documents carrying a gold-chain fact.
    pub gold: bool,
    pub sentences: Vec<PlannedSentence>,
}

impl DocPlan {
    pub fn render(&self) -> String {
        self.sentences.iter().map(PlannedSentence::render).collect::<Vec<_>>().join(" ")
    }
}

/// A mention the generator placed, with its token position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedMention {
    pub entity_key: String,
    pub kind: MentionKind,
    pub doc_id: usize,
    pub span: TokenSpan,
    pub sentence: usize,
    /// Expected to become a graph node: every subject and candidate
    /// mention, and reasoning mentions of chain entities. Holds when path
    /// extraction allows `gold_path_docs` documents.
    pub graph_node: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSample {
    pub sample: Sample,
    /// Keys of `s, e_1, …, e_l, a`.
    pub gold_chain: Vec<String>,
    /// One plan per support, in support order.
    pub doc_plan: Vec<DocPlan>,
    pub mentions: Vec<PlantedMention>,
}

/// Sidecar record with everything but the sample itself.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthMetadata {
    pub id: String,
    pub gold_chain: Vec<String>,
    pub doc_plan: Vec<DocPlan>,
    pub mentions: Vec<PlantedMention>,
}

impl SynthSample {
    pub fn metadata(&self) -> SynthMetadata {
        SynthMetadata {
            id: self.sample.id.clone(),
            gold_chain: self.gold_chain.clone(),
            doc_plan: self.doc_plan.clone(),
            mentions: self.mentions.clone(),
        }
    }

    /// Number of planted mentions expected as graph nodes.
    pub fn expected_nodes(&self) -> usize {
        self.mentions.iter().filter(|m| m.graph_node).count()
    }
}

/// The chain's final entity.
pub fn oracle_answer(sample: &SynthSample) -> &str {
    sample.gold_chain.last().map(String::as_str).unwrap_or_default()
}

/// Ids of samples whose label disagrees with the oracle.
pub fn label_mismatches(samples: &[SynthSample]) -> Vec<String> {
    samples
        .iter()
        .filter(|s| s.sample.answer.as_deref() != Some(oracle_answer(s)))
        .map(|s| s.sample.id.clone())
        .collect()
}

/// Capitalized three-syllable pseudo-words, fixed for a given size.
pub fn vocabulary(size: usize) -> Vec<String> {
    let total = ONSETS.len().pow(3) * VOWELS.len().pow(3);
    let mut rng = ChaCha8Rng::seed_from_u64(VOCAB_SEED);
    index::sample(&mut rng, total, size.min(total))
        .into_iter()
        .map(|mut code| {
            let mut word = String::new();
            for _ in 0..3 {
                word.push_str(ONSETS[code % ONSETS.len()]);
                code /= ONSETS.len();
                word.push_str(VOWELS[code % VOWELS.len()]);
                code /= VOWELS.len();
            }
            let mut chars = word.chars();
            let first = chars.next().expect("nonempty").to_ascii_uppercase();
            std::iter::once(first).chain(chars).collect()
        })
        .collect()
}

pub fn generate_corpus(spec: &SynthSpec) -> Result<Vec<SynthSample>> {
    spec.validate()?;
    let vocab = vocabulary(spec.vocab_size);
    (0..spec.num_samples).map(|i| generate_sample(spec, &vocab, i)).collect()
}

fn template(rng: &mut ChaCha8Rng) -> String {
    TEMPLATES[rng.random_range(0..TEMPLATES.len())].to_string()
}

fn generate_sample(spec: &SynthSpec, vocab: &[String], idx: usize) -> Result<SynthSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ idx as u64);
    let n_entities = spec.entities_per_sample();
    let words = index::sample(&mut rng, vocab.len(), 2 * n_entities).into_vec();
    let names: Vec<String> = words.chunks(2).map(|w| format!("{} {}", vocab[w[0]], vocab[w[1]])).collect();
    let mut names = names.into_iter();
    let mut take = || names.next().expect("entity budget checked by validate");

    let l = spec.hop_depth;
    let chain: Vec<String> = (0..l + 2).map(|_| take()).collect();
    let answer = chain[l + 1].clone();
    let distractors: Vec<String> = (0..spec.num_candidates - 1).map(|_| take()).collect();
    let n_decoys = spec.num_decoys();

    let mut docs: Vec<DocPlan> = chain
        .windows(2)
        .map(|w| DocPlan {
            gold: true,
            sentences: vec![PlannedSentence::Facts {
                facts: vec![Fact {
                    head: w[0].clone(),
                    relation: template(&mut rng),
                    tail: w[1].clone(),
                    role: FactRole::Gold,
                }],
            }],
        })
        .collect();

    let mut distractor_facts: Vec<Vec<Fact>> = vec![Vec::new(); spec.num_distractor_docs];
    for (k, d) in distractors.iter().enumerate() {
        let (head, role) = if k < n_decoys {
            (chain[l - 1].clone(), FactRole::Decoy)
        } else {
            (take(), FactRole::Unrelated)
        };
        distractor_facts[k % spec.num_distractor_docs].push(Fact {
            head,
            relation: template(&mut rng),
            tail: d.clone(),
            role,
        });
    }
    if !spec.strict && rng.random_bool(0.5) {
        let k = rng.random_range(0..spec.num_distractor_docs);
        distractor_facts[k].push(Fact {
            head: chain[0].clone(),
            relation: template(&mut rng),
            tail: answer.clone(),
            role: FactRole::Shortcut,
        });
    }
    for facts in distractor_facts {
        let sentences = if spec.multi_fact && !facts.is_empty() {
            vec![PlannedSentence::Facts { facts }]
        } else {
            facts.into_iter().map(|f| PlannedSentence::Facts { facts: vec![f] }).collect()
        };
        docs.push(DocPlan { gold: false, sentences });
    }
    for doc in &mut docs {
        for _ in 0..spec.filler_sentences {
            let text = FILLERS[rng.random_range(0..FILLERS.len())].to_string();
            let at = rng.random_range(0..=doc.sentences.len());
            doc.sentences.insert(at, PlannedSentence::Filler { text });
        }
    }
    docs.shuffle(&mut rng);

    let mut candidates: Vec<String> = std::iter::once(answer.clone()).chain(distractors).collect();
    candidates.shuffle(&mut rng);
    let relation = QUERY_RELATIONS[rng.random_range(0..QUERY_RELATIONS.len())];

    let subject_key = normalize(&chain[0]);
    let candidate_keys: Vec<String> = candidates.iter().map(|c| normalize(c)).collect();
    let interior: Vec<String> = chain[1..=l].iter().map(|c| normalize(c)).collect();
    let mentions = plant_positions(&docs, &subject_key, &candidate_keys, &interior);

    let sample = Sample {
        id: format!("synth-{}-{idx:05}", spec.seed),
        question: Question::new(relation, &chain[0])?,
        supports: docs.iter().map(DocPlan::render).collect(),
        candidates: candidate_keys,
        answer: Some(normalize(&answer)),
    };
    Ok(SynthSample {
        sample,
        gold_chain: chain.iter().map(|c| normalize(c)).collect(),
        doc_plan: docs,
        mentions,
    })
}

/// Token positions of every entity in the rendered plans, counted from
/// the plan: names and relation phrases are space-separated words and each
/// sentence ends in one period token.
fn plant_positions(docs: &[DocPlan], subject: &str, candidates: &[String], interior: &[String]) -> Vec<PlantedMention> {
    let words = |s: &str| s.split_whitespace().count();
    let mut out = Vec::new();
    for (doc_id, doc) in docs.iter().enumerate() {
        let mut pos = 0;
        for (sentence, planned) in doc.sentences.iter().enumerate() {
            match planned {
                PlannedSentence::Filler { text } => pos += words(text),
                PlannedSentence::Facts { facts } => {
                    for (fi, f) in facts.iter().enumerate() {
                        if fi > 0 {
                            pos += 1;
                        }
                        for (name, skip) in [(&f.head, words(&f.relation)), (&f.tail, 0)] {
                            let key = normalize(name);
                            let n = words(name);
                            let (kind, graph_node) = if key == subject {
                                (MentionKind::Subject, true)
                            } else if candidates.contains(&key) {
                                (MentionKind::Candidate, true)
                            } else {
                                (MentionKind::Reasoning, interior.contains(&key))
                            };
                            out.push(PlantedMention {
                                entity_key: key,
                                kind,
                                doc_id,
                                span: (pos, pos + n),
                                sentence,
                                graph_node,
                            });
                            pos += n + skip;
                        }
                    }
                }
            }
            pos += 1;
        }
    }
    out
}
