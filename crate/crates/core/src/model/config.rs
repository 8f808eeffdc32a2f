use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeMode, GraphOptions};

/// Ablation switches. Defaults enable every component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub use_reasoning_entities: bool,
    pub use_question_gate: bool,
    /// When off, each node's question summary is the plain mean of the
    /// encoded question instead of an attention-weighted sum.
    pub use_question_attention_pooling: bool,
    pub edge_mode: EdgeMode,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self {
            use_reasoning_entities: true,
            use_question_gate: true,
            use_question_attention_pooling: true,
            edge_mode: EdgeMode::Full6,
        }
    }
}

/// How node logits become per-candidate probabilities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateScoring {
    /// Softmax over all candidate nodes, then the maximum over each
    /// candidate's mentions.
    #[default]
    NodeSoftmaxMax,
    /// Maximum logit over each candidate's mentions, then a softmax over
    /// candidates.
    MaxLogitSoftmax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Hidden width.
    pub d: usize,
    /// Number of shared gated graph layers.
    pub layers: usize,
    pub max_nodes: usize,
    pub max_query_len: usize,
    /// Width of the static word vectors.
    pub embed_dim: usize,
    /// Most documents a reasoning path may touch.
    pub max_path_docs: usize,
    /// Use one scalar question gate per node instead of a d-vector gate.
    pub scalar_question_gate: bool,
    pub candidate_scoring: CandidateScoring,
    /// Seed for parameter initialization.
    pub init_seed: u64,
    pub ablation: AblationFlags,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 256,
            layers: 4,
            max_nodes: 600,
            max_query_len: 25,
            embed_dim: 300,
            max_path_docs: 2,
            scalar_question_gate: false,
            candidate_scoring: CandidateScoring::NodeSoftmaxMax,
            init_seed: 0,
            ablation: AblationFlags::default(),
        }
    }
}

impl ModelConfig {
    pub const NUM_RELATIONS: usize = 6;

    /// Small configuration for tests and synthetic experiments.
    pub fn tiny() -> Self {
        Self {
            d: 32,
            layers: 4,
            embed_dim: 32,
            max_path_docs: 3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || !self.d.is_multiple_of(2) {
            return Err(Error::Config(format!("d must be even and positive, got {}", self.d)));
        }
        if self.layers == 0 {
            return Err(Error::Config("layers must be at least 1".into()));
        }
        if self.max_nodes == 0 || self.max_query_len == 0 || self.embed_dim == 0 || self.max_path_docs == 0 {
            return Err(Error::Config(
                "max_nodes, max_query_len, embed_dim and max_path_docs must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn graph_options(&self) -> GraphOptions {
        GraphOptions {
            max_path_docs: self.max_path_docs,
            max_nodes: self.max_nodes,
            use_reasoning_entities: self.ablation.use_reasoning_entities,
        }
    }

    /// Fields that fix parameter shapes must agree for a checkpoint to load.
    pub fn shape_compatible(&self, other: &ModelConfig) -> bool {
        self.d == other.d && self.embed_dim == other.embed_dim && self.scalar_question_gate == other.scalar_question_gate
    }
}
