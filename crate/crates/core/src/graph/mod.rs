//! Reasoning-path extraction and typed entity-graph construction.

mod entity_graph;
mod paths;

use serde::{Deserialize, Serialize};

pub use entity_graph::{build_entity_graph, classify_edges, EdgeMode, EdgeType, EntityGraph};
pub use paths::{extract_paths, ReasoningPath, StepGraph, MAX_PATHS_PER_PAIR};

use crate::error::Error;
use crate::ingest::{Mention, Sample, TokenizedDoc, TokenizedSample};

/// Options controlling graph construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphOptions {
    pub max_path_docs: usize,
    pub max_nodes: usize,
    pub use_reasoning_entities: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        Self {
            max_path_docs: 2,
            max_nodes: 600,
            use_reasoning_entities: true,
        }
    }
}

/// Serialized graph layout. Each undirected edge is listed once, with the
/// smaller node index first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub nodes: Vec<Mention>,
    pub edges: Vec<(usize, usize, String)>,
    pub paths: Vec<Vec<usize>>,
}

impl From<&EntityGraph> for GraphRecord {
    fn from(g: &EntityGraph) -> Self {
        GraphRecord {
            nodes: g.nodes.clone(),
            edges: g.edges().into_iter().map(|(i, j, r)| (i, j, r.name().to_string())).collect(),
            paths: g.paths.clone(),
        }
    }
}

impl TryFrom<GraphRecord> for EntityGraph {
    type Error = Error;

    /// Relations are recomputed from nodes and paths; the listed edges
    /// must agree with them.
    fn try_from(r: GraphRecord) -> Result<Self, Error> {
        let listed = r.edges.clone();
        let graph = EntityGraph::from_parts(r.nodes, r.paths)?;
        let recomputed: Vec<(usize, usize, String)> =
            graph.edges().into_iter().map(|(i, j, e)| (i, j, e.name().to_string())).collect();
        let mut sorted = listed;
        sorted.sort();
        let mut expected = recomputed;
        expected.sort();
        if sorted != expected {
            return Err(Error::Config("graph edges disagree with its nodes and paths".into()));
        }
        Ok(graph)
    }
}

impl Serialize for EntityGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GraphRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for EntityGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let record = GraphRecord::deserialize(d)?;
        EntityGraph::try_from(record).map_err(serde::de::Error::custom)
    }
}

/// A sample together with its tokenized documents and entity graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSample {
    pub sample: Sample,
    pub docs: Vec<TokenizedDoc>,
    pub graph: EntityGraph,
    /// Fewest documents on any extracted path, before ablations.
    pub min_path_docs: Option<usize>,
}

/// Paths, graph construction and truncation for one ingested sample.
pub fn build_graph(ingested: &TokenizedSample, options: &GraphOptions) -> GraphSample {
    let paths = extract_paths(&ingested.mentions, options.max_path_docs);
    let min_path_docs = paths.iter().map(ReasoningPath::doc_count).min();
    let graph = build_entity_graph(&ingested.mentions, &paths, options.use_reasoning_entities)
        .truncate(options.max_nodes);
    GraphSample {
        sample: ingested.sample.clone(),
        docs: ingested.docs.clone(),
        graph,
        min_path_docs,
    }
}
