use pathqa_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::graph::{build_graph, EntityGraph, GraphSample};
use crate::ingest::{ingest_sample, MentionKind, Sample};

/// Numeric model inputs for one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparedSample {
    pub id: String,
    /// `T × 2E`: mention-token mean followed by sentence-token mean.
    pub node_inputs: Tensor,
    /// `M × E` question token vectors.
    pub question_inputs: Tensor,
    pub question_mask: Vec<bool>,
    /// `T × T` relation bitmasks after the edge-mode ablation.
    pub relation_masks: Vec<u8>,
    pub num_nodes: usize,
    /// Node indices of each candidate, in candidate order.
    pub candidate_groups: Vec<Vec<usize>>,
    pub answer: Option<usize>,
    pub num_docs: usize,
    pub min_path_docs: Option<usize>,
}

impl PreparedSample {
    pub fn has_candidate_nodes(&self) -> bool {
        self.candidate_groups.iter().any(|g| !g.is_empty())
    }

    /// True when the labelled answer has at least one mention node.
    pub fn answer_in_graph(&self) -> bool {
        self.answer.is_some_and(|a| !self.candidate_groups[a].is_empty())
    }
}

/// Graph with reasoning nodes and paths through them removed.
fn without_reasoning(graph: &EntityGraph) -> Result<EntityGraph> {
    let keep: Vec<usize> = (0..graph.len()).filter(|&i| graph.nodes[i].kind != MentionKind::Reasoning).collect();
    if keep.len() == graph.len() {
        return Ok(graph.clone());
    }
    let mut remap = vec![usize::MAX; graph.len()];
    for (new, &old) in keep.iter().enumerate() {
        remap[old] = new;
    }
    let nodes = keep.iter().map(|&i| graph.nodes[i].clone()).collect();
    let paths = graph
        .paths
        .iter()
        .filter(|p| p.iter().all(|&i| remap[i] != usize::MAX))
        .map(|p| p.iter().map(|&i| remap[i]).collect())
        .collect();
    EntityGraph::from_parts(nodes, paths)
}

/// Embeds nodes and question tokens and applies graph-side ablations.
pub fn prepare(gs: &GraphSample, embedder: &dyn EmbeddingProvider, config: &ModelConfig) -> Result<PreparedSample> {
    if embedder.dim() != config.embed_dim {
        return Err(Error::Config(format!(
            "embeddings have width {} but the model expects {}",
            embedder.dim(),
            config.embed_dim
        )));
    }
    let graph = if config.ablation.use_reasoning_entities {
        gs.graph.clone()
    } else {
        without_reasoning(&gs.graph)?
    };
    let graph = graph.truncate(config.max_nodes);
    let t = graph.len();
    let e = config.embed_dim;

    let mut node_data = Vec::with_capacity(t * 2 * e);
    for node in &graph.nodes {
        let doc = &gs.docs[node.doc_id];
        let (a, b) = node.token_span;
        node_data.extend(embedder.mean(&doc.lower[a..b]));
        let (sa, sb) = doc.sentence_spans[node.sentence_index];
        node_data.extend(embedder.mean(&doc.lower[sa..sb]));
    }

    let tokens = &gs.sample.question.tokens;
    let m = tokens.len().min(config.max_query_len);
    if m == 0 {
        return Err(Error::EmptyQuestion);
    }
    let mut q_data = Vec::with_capacity(m * e);
    for tok in &tokens[..m] {
        q_data.extend(embedder.embed(tok));
    }

    Ok(PreparedSample {
        id: gs.sample.id.clone(),
        node_inputs: Tensor::new(vec![t, 2 * e], node_data)?,
        question_inputs: Tensor::new(vec![m, e], q_data)?,
        question_mask: vec![true; m],
        relation_masks: graph.masks_for(config.ablation.edge_mode),
        num_nodes: t,
        candidate_groups: graph.candidate_groups(&gs.sample.candidates),
        answer: gs.sample.answer_index(),
        num_docs: gs.sample.supports.len(),
        min_path_docs: gs.min_path_docs,
    })
}

/// Full pipeline from a parsed sample to model inputs.
pub fn prepare_sample(sample: &Sample, embedder: &dyn EmbeddingProvider, config: &ModelConfig) -> Result<PreparedSample> {
    let gs = build_graph(&ingest_sample(sample), &config.graph_options());
    prepare(&gs, embedder, config)
}
