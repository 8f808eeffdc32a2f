//! Question-gated relational graph network over entity graphs.

mod checkpoint;
mod config;
pub mod layers;
mod params;
mod prepare;
pub mod scoring;

use pathqa_autodiff::{ParameterSet, Tape, Tensor, Var};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{AblationFlags, CandidateScoring, ModelConfig};
pub use layers::StackOptions;
pub use params::{ids_from_names, init_params, LstmIds, LstmVars, ModelVars, ParamIds};
pub use prepare::{prepare, prepare_sample, PreparedSample};

use crate::error::{Error, Result};

/// Tape nodes produced by one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// Final node states `h^L` (`T × d`).
    pub states: Var,
    /// One logit per node (`[T]`).
    pub logits: Var,
    /// Per-candidate probability; `None` when the candidate has no node.
    pub candidate_probs: Vec<Option<Var>>,
    /// Negative log-likelihood of the answer, when labelled and present.
    pub loss: Option<Var>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub predicted: usize,
}

#[derive(Clone, Debug)]
pub struct SampleGradient {
    pub loss: f64,
    pub predicted: usize,
    /// One tensor per parameter, in parameter order.
    pub grads: Vec<Tensor>,
}

fn probabilities(tape: &Tape, out: &Forward) -> Vec<f64> {
    out.candidate_probs
        .iter()
        .map(|p| p.map_or(0.0, |v| tape.value(v).data()[0]))
        .collect()
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParameterSet,
    pub ids: ParamIds,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let (params, ids) = init_params(&config)?;
        Ok(Self { config, params, ids })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    pub fn stack_options(&self) -> StackOptions {
        StackOptions {
            layers: self.config.layers,
            use_question_gate: self.config.ablation.use_question_gate,
            use_question_attention: self.config.ablation.use_question_attention_pooling,
        }
    }

    /// Forward pass on `tape`, with `leaves` holding one leaf per parameter.
    pub fn forward(&self, tape: &mut Tape, leaves: &[Var], s: &PreparedSample) -> Result<Forward> {
        let v = self.ids.vars(leaves);
        let x = tape.constant(s.node_inputs.clone());
        let qx = tape.constant(s.question_inputs.clone());
        let f_n = layers::embed_nodes(tape, &v, x)?;
        let p = layers::encode_question(tape, &v, qx)?;
        let adjacency = layers::adjacency(&s.relation_masks, s.num_nodes)?;
        let states = layers::gated_rgcn_forward(tape, &v, f_n, p, &s.question_mask, &adjacency, &self.stack_options())?;
        let logits = layers::bidaf_output(tape, &v, states, p, &s.question_mask)?;
        let candidate_probs =
            scoring::candidate_probabilities(tape, logits, &s.candidate_groups, self.config.candidate_scoring)?;
        let loss = s
            .answer
            .and_then(|a| candidate_probs[a])
            .map(|prob| scoring::nll(tape, prob));
        Ok(Forward {
            states,
            logits,
            candidate_probs,
            loss,
        })
    }

    /// Loss, prediction and per-parameter gradients for one labelled sample.
    pub fn loss_and_gradients(&self, s: &PreparedSample) -> Result<SampleGradient> {
        let mut tape = Tape::new();
        let leaves = tape.params(&self.params);
        let out = self.forward(&mut tape, &leaves, s)?;
        let loss = out.loss.ok_or_else(|| Error::AnswerNotInGraph(s.id.clone()))?;
        let probabilities = probabilities(&tape, &out);
        let predicted = scoring::argmax(&probabilities).ok_or(Error::NoCandidateNodes)?;
        Ok(SampleGradient {
            loss: tape.value(loss).data()[0],
            predicted,
            grads: tape.backward(loss)?.for_params(&self.params),
        })
    }

    pub fn predict(&self, s: &PreparedSample) -> Result<Prediction> {
        let mut tape = Tape::new();
        let leaves = tape.params(&self.params);
        let out = self.forward(&mut tape, &leaves, s)?;
        let probabilities = probabilities(&tape, &out);
        let predicted = scoring::argmax(&probabilities).ok_or(Error::NoCandidateNodes)?;
        Ok(Prediction {
            probabilities,
            predicted,
        })
    }
}
