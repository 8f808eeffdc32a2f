use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::paths::ReasoningPath;
use crate::error::{Error, Result};
use crate::ingest::{Mention, MentionKind, TokenSpan};

/// The six structural relations between node pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeType {
    SubjectReasoningSameSentence,
    ReasoningAdjacentOnPath,
    ReasoningCandidateSameSentence,
    SameCandidate,
    SameDocument,
    Fallback,
}

impl EdgeType {
    pub const ALL: [EdgeType; 6] = [
        EdgeType::SubjectReasoningSameSentence,
        EdgeType::ReasoningAdjacentOnPath,
        EdgeType::ReasoningCandidateSameSentence,
        EdgeType::SameCandidate,
        EdgeType::SameDocument,
        EdgeType::Fallback,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn bit(self) -> u8 {
        1 << self.index()
    }

    pub fn name(self) -> &'static str {
        match self {
            EdgeType::SubjectReasoningSameSentence => "subject_reasoning_same_sentence",
            EdgeType::ReasoningAdjacentOnPath => "reasoning_adjacent_on_path",
            EdgeType::ReasoningCandidateSameSentence => "reasoning_candidate_same_sentence",
            EdgeType::SameCandidate => "same_candidate",
            EdgeType::SameDocument => "same_document",
            EdgeType::Fallback => "fallback",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }

    /// Relations present in a bitmask, in declaration order.
    pub fn in_mask(mask: u8) -> impl Iterator<Item = EdgeType> {
        Self::ALL.into_iter().filter(move |e| mask & e.bit() != 0)
    }
}

/// How the six relations are collapsed for edge-type ablations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMode {
    /// All six relations.
    #[default]
    Full6,
    /// Two relations plus the fallback: same document, and same entity in
    /// a different document.
    ReducedBag,
    /// One shared relation for every connected pair.
    SingleType,
}

/// Mention nodes with a symmetric relation bitmask per node pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntityGraph {
    pub nodes: Vec<Mention>,
    /// Node-index chains, one per reasoning path.
    pub paths: Vec<Vec<usize>>,
    relations: Vec<u8>,
}

impl EntityGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Relation bitmask of pair `(i, j)`; zero on the diagonal.
    pub fn relations(&self, i: usize, j: usize) -> u8 {
        self.relations[i * self.len() + j]
    }

    pub fn relation_set(&self, i: usize, j: usize) -> Vec<EdgeType> {
        EdgeType::in_mask(self.relations(i, j)).collect()
    }

    /// Indices of `(i, j, relation)` triples with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, EdgeType)> {
        let t = self.len();
        let mut out = Vec::new();
        for i in 0..t {
            for j in i + 1..t {
                out.extend(EdgeType::in_mask(self.relations(i, j)).map(|r| (i, j, r)));
            }
        }
        out
    }

    pub fn nodes_of_kind(&self, kind: MentionKind) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.nodes[i].kind == kind)
    }

    /// Candidate node indices grouped per candidate key, in `candidates` order.
    pub fn candidate_groups(&self, candidates: &[String]) -> Vec<Vec<usize>> {
        candidates
            .iter()
            .map(|c| {
                self.nodes_of_kind(MentionKind::Candidate)
                    .filter(|&i| &self.nodes[i].entity_key == c)
                    .collect()
            })
            .collect()
    }

    /// Relation masks after collapsing edge types for an ablation mode.
    pub fn masks_for(&self, mode: EdgeMode) -> Vec<u8> {
        let t = self.len();
        match mode {
            EdgeMode::Full6 => self.relations.clone(),
            EdgeMode::SingleType => (0..t * t)
                .map(|k| if k / t != k % t { EdgeType::Fallback.bit() } else { 0 })
                .collect(),
            EdgeMode::ReducedBag => {
                let mut out = vec![0u8; t * t];
                for i in 0..t {
                    for j in 0..t {
                        if i == j {
                            continue;
                        }
                        let (a, b) = (&self.nodes[i], &self.nodes[j]);
                        let mut mask = 0;
                        if a.doc_id == b.doc_id {
                            mask |= EdgeType::SameDocument.bit();
                        } else if a.entity_key == b.entity_key {
                            mask |= EdgeType::SameCandidate.bit();
                        }
                        if mask == 0 {
                            mask = EdgeType::Fallback.bit();
                        }
                        out[i * t + j] = mask;
                    }
                }
                out
            }
        }
    }

    /// Rebuilds a graph from interchange parts, recomputing every relation.
    pub fn from_parts(nodes: Vec<Mention>, paths: Vec<Vec<usize>>) -> Result<Self> {
        if let Some(&bad) = paths.iter().flatten().find(|&&i| i >= nodes.len()) {
            return Err(Error::Config(format!("path references node {bad} of {}", nodes.len())));
        }
        let relations = classify_edges(&nodes, &paths);
        Ok(Self {
            nodes,
            paths,
            relations,
        })
    }

    /// Keeps at most `max_nodes` nodes, preferring candidates, then the
    /// subject, then reasoning entities, each in node order. Paths through
    /// dropped nodes are discarded, reasoning nodes left on no path are
    /// removed, and relations are recomputed.
    pub fn truncate(&self, max_nodes: usize) -> EntityGraph {
        assert!(max_nodes >= 1, "max_nodes must be at least 1");
        if self.len() <= max_nodes {
            return self.clone();
        }
        let priority = |k: MentionKind| match k {
            MentionKind::Candidate => 0,
            MentionKind::Subject => 1,
            MentionKind::Reasoning => 2,
        };
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&i| (priority(self.nodes[i].kind), i));
        let mut keep = vec![false; self.len()];
        for &i in order.iter().take(max_nodes) {
            keep[i] = true;
        }
        let paths: Vec<&Vec<usize>> = self.paths.iter().filter(|p| p.iter().all(|&i| keep[i])).collect();
        let mut on_path = vec![false; self.len()];
        for &i in paths.iter().copied().flatten() {
            on_path[i] = true;
        }
        for i in 0..self.len() {
            if self.nodes[i].kind == MentionKind::Reasoning && !on_path[i] {
                keep[i] = false;
            }
        }
        let mut remap = vec![usize::MAX; self.len()];
        let mut nodes = Vec::new();
        for i in 0..self.len() {
            if keep[i] {
                remap[i] = nodes.len();
                nodes.push(self.nodes[i].clone());
            }
        }
        let paths: Vec<Vec<usize>> = paths.into_iter().map(|p| p.iter().map(|&i| remap[i]).collect()).collect();
        let relations = classify_edges(&nodes, &paths);
        EntityGraph {
            nodes,
            paths,
            relations,
        }
    }
}

/// Relation bitmasks for every ordered node pair. Rules 1 to 5 are
/// independent predicates; a pair satisfying none of them gets the
/// fallback relation.
pub fn classify_edges(nodes: &[Mention], paths: &[Vec<usize>]) -> Vec<u8> {
    use MentionKind::*;
    let t = nodes.len();
    let mut adjacent = vec![false; t * t];
    for path in paths {
        for w in path.windows(2) {
            if nodes[w[0]].kind == Reasoning && nodes[w[1]].kind == Reasoning && w[0] != w[1] {
                adjacent[w[0] * t + w[1]] = true;
                adjacent[w[1] * t + w[0]] = true;
            }
        }
    }
    let mut out = vec![0u8; t * t];
    for i in 0..t {
        for j in 0..t {
            if i == j {
                continue;
            }
            let (a, b) = (&nodes[i], &nodes[j]);
            let kinds = (a.kind, b.kind);
            let co = a.co_sentence(b);
            let mut mask = 0u8;
            if co && matches!(kinds, (Subject, Reasoning) | (Reasoning, Subject)) {
                mask |= EdgeType::SubjectReasoningSameSentence.bit();
            }
            if adjacent[i * t + j] {
                mask |= EdgeType::ReasoningAdjacentOnPath.bit();
            }
            if co && matches!(kinds, (Reasoning, Candidate) | (Candidate, Reasoning)) {
                mask |= EdgeType::ReasoningCandidateSameSentence.bit();
            }
            if kinds == (Candidate, Candidate) && a.entity_key == b.entity_key {
                mask |= EdgeType::SameCandidate.bit();
            }
            if a.doc_id == b.doc_id {
                mask |= EdgeType::SameDocument.bit();
            }
            if mask == 0 {
                mask = EdgeType::Fallback.bit();
            }
            out[i * t + j] = mask;
        }
    }
    out
}

/// Node set: every subject and candidate mention plus every reasoning
/// mention that lies on a path, deduplicated and sorted by kind, key,
/// document and span. With `use_reasoning_entities` off, reasoning
/// mentions and paths through them are left out.
pub fn build_entity_graph(mentions: &[Mention], paths: &[ReasoningPath], use_reasoning_entities: bool) -> EntityGraph {
    type NodeKey<'a> = (MentionKind, &'a str, usize, TokenSpan, usize);
    let mut set: BTreeSet<NodeKey> = BTreeSet::new();
    fn key(m: &Mention) -> NodeKey<'_> {
        (m.kind, m.entity_key.as_str(), m.doc_id, m.token_span, m.sentence_index)
    }
    for m in mentions {
        if m.kind != MentionKind::Reasoning {
            set.insert(key(m));
        }
    }
    let kept_paths: Vec<&ReasoningPath> = paths
        .iter()
        .filter(|p| use_reasoning_entities || p.steps.iter().all(|m| m.kind != MentionKind::Reasoning))
        .collect();
    for p in &kept_paths {
        for m in &p.steps {
            set.insert(key(m));
        }
    }
    let nodes: Vec<Mention> = set
        .into_iter()
        .map(|(kind, entity_key, doc_id, token_span, sentence_index)| Mention {
            entity_key: entity_key.to_string(),
            kind,
            doc_id,
            token_span,
            sentence_index,
        })
        .collect();
    let index: HashMap<(MentionKind, &str, usize, TokenSpan), usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, m)| ((m.kind, m.entity_key.as_str(), m.doc_id, m.token_span), i))
        .collect();
    let node_paths: Vec<Vec<usize>> = kept_paths
        .iter()
        .map(|p| {
            p.steps
                .iter()
                .map(|m| index[&(m.kind, m.entity_key.as_str(), m.doc_id, m.token_span)])
                .collect()
        })
        .collect();
    let relations = classify_edges(&nodes, &node_paths);
    EntityGraph {
        nodes,
        paths: node_paths,
        relations,
    }
}
