use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::ingest::{Mention, MentionKind};

/// Upper bound on enumerated shortest paths per (start, candidate) pair.
/// Only dense real-world corpora approach it.
pub const MAX_PATHS_PER_PAIR: usize = 1000;

/// A chain `s → e_1 → … → c` of mentions.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReasoningPath {
    pub steps: Vec<Mention>,
    pub candidate_key: String,
}

impl ReasoningPath {
    /// Number of distinct documents the path touches.
    pub fn doc_count(&self) -> usize {
        let mut docs: Vec<usize> = self.steps.iter().map(|m| m.doc_id).collect();
        docs.sort_unstable();
        docs.dedup();
        docs.len()
    }

    pub fn reasoning_steps(&self) -> usize {
        self.steps.len().saturating_sub(2)
    }
}

/// Which mentions a path may step to from each mention.
///
/// From the start (a subject mention) or a reasoning mention, a step goes
/// to any other mention in the same sentence, or, from a reasoning
/// mention, to a mention with the same key in a different document. Only
/// reasoning mentions may be passed through; candidates end a path.
pub struct StepGraph {
    neighbours: Vec<Vec<usize>>,
}

impl StepGraph {
    pub fn new(mentions: &[Mention]) -> Self {
        let mut by_sentence: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        let mut by_key: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, m) in mentions.iter().enumerate() {
            by_sentence.entry((m.doc_id, m.sentence_index)).or_default().push(i);
            if m.kind == MentionKind::Reasoning {
                by_key.entry(m.entity_key.as_str()).or_default().push(i);
            }
        }
        let neighbours = mentions
            .iter()
            .enumerate()
            .map(|(i, m)| {
                if m.kind == MentionKind::Candidate {
                    return Vec::new();
                }
                let mut out: Vec<usize> = by_sentence[&(m.doc_id, m.sentence_index)]
                    .iter()
                    .copied()
                    .filter(|&j| j != i)
                    .collect();
                if m.kind == MentionKind::Reasoning {
                    out.extend(by_key[m.entity_key.as_str()].iter().copied().filter(|&j| mentions[j].doc_id != m.doc_id));
                }
                out.retain(|&j| mentions[j].kind != MentionKind::Subject);
                out.sort_unstable();
                out.dedup();
                out
            })
            .collect();
        Self { neighbours }
    }

    pub fn neighbours(&self, i: usize) -> &[usize] {
        &self.neighbours[i]
    }
}

fn with_doc(docs: &[usize], doc: usize) -> Vec<usize> {
    let mut out = docs.to_vec();
    if let Err(pos) = out.binary_search(&doc) {
        out.insert(pos, doc);
    }
    out
}

/// Breadth-first enumeration of all shortest paths from every subject
/// mention to every reachable candidate mention, touching at most
/// `max_docs` documents. Returned paths are sorted.
pub fn extract_paths(mentions: &[Mention], max_docs: usize) -> Vec<ReasoningPath> {
    assert!(max_docs >= 1, "max_docs must be at least 1");
    let steps = StepGraph::new(mentions);
    let mut out = Vec::new();
    for (start, m) in mentions.iter().enumerate() {
        if m.kind == MentionKind::Subject {
            out.extend(paths_from(mentions, &steps, start, max_docs));
        }
    }
    out.sort();
    out.dedup();
    out
}

struct State {
    mention: usize,
    depth: usize,
    preds: Vec<usize>,
}

fn paths_from(mentions: &[Mention], steps: &StepGraph, start: usize, max_docs: usize) -> Vec<ReasoningPath> {
    let mut states = vec![State {
        mention: start,
        depth: 0,
        preds: Vec::new(),
    }];
    let mut index: HashMap<(usize, Vec<usize>), usize> = HashMap::new();
    index.insert((start, vec![mentions[start].doc_id]), 0);
    let mut doc_sets = vec![vec![mentions[start].doc_id]];
    let mut frontier = vec![0usize];
    let mut depth = 0;
    while !frontier.is_empty() {
        depth += 1;
        let mut next = Vec::new();
        for &sid in &frontier {
            let from = states[sid].mention;
            for &to in steps.neighbours(from) {
                let docs = with_doc(&doc_sets[sid], mentions[to].doc_id);
                if docs.len() > max_docs {
                    continue;
                }
                let key = (to, docs);
                match index.get(&key) {
                    Some(&existing) => {
                        if states[existing].depth == depth {
                            states[existing].preds.push(sid);
                        }
                    }
                    None => {
                        let id = states.len();
                        states.push(State {
                            mention: to,
                            depth,
                            preds: vec![sid],
                        });
                        doc_sets.push(key.1.clone());
                        index.insert(key, id);
                        if mentions[to].kind == MentionKind::Reasoning {
                            next.push(id);
                        }
                    }
                }
            }
        }
        frontier = next;
    }

    // Terminal states grouped by candidate mention, keeping the shallowest.
    let mut best: BTreeMap<usize, (usize, Vec<usize>)> = BTreeMap::new();
    for (id, s) in states.iter().enumerate() {
        if mentions[s.mention].kind != MentionKind::Candidate {
            continue;
        }
        let entry = best.entry(s.mention).or_insert((s.depth, Vec::new()));
        if s.depth < entry.0 {
            *entry = (s.depth, Vec::new());
        }
        if s.depth == entry.0 {
            entry.1.push(id);
        }
    }

    let mut out = Vec::new();
    for (cand, (_, terminals)) in best {
        let mut chains = Vec::new();
        for t in terminals {
            collect_chains(&states, t, &mut vec![t], &mut chains);
        }
        chains.sort();
        chains.dedup();
        if chains.len() > MAX_PATHS_PER_PAIR {
            log::warn!(
                "{} shortest paths to candidate mention {}; keeping {}",
                chains.len(),
                cand,
                MAX_PATHS_PER_PAIR
            );
            chains.truncate(MAX_PATHS_PER_PAIR);
        }
        for chain in chains {
            out.push(ReasoningPath {
                steps: chain.iter().map(|&m| mentions[m].clone()).collect(),
                candidate_key: mentions[cand].entity_key.clone(),
            });
        }
    }
    out
}

/// Walks predecessor links back to the start, emitting mention chains.
fn collect_chains(states: &[State], sid: usize, trail: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    let s = &states[sid];
    if s.preds.is_empty() {
        out.push(trail.iter().rev().map(|&id| states[id].mention).collect());
        return;
    }
    if out.len() > MAX_PATHS_PER_PAIR * 4 {
        return;
    }
    for &p in &s.preds {
        trail.push(p);
        collect_chains(states, p, trail, out);
        trail.pop();
    }
}
