use pathqa_autodiff::{ParamId, ParameterSet, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::Result;
use crate::graph::EdgeType;

#[derive(Clone, Copy, Debug)]
pub struct LstmIds {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
}

/// Handles to every model parameter. One set serves all layers.
#[derive(Clone, Debug)]
pub struct ParamIds {
    pub node_proj_w: ParamId,
    pub node_proj_b: ParamId,
    pub lstm_fwd: LstmIds,
    pub lstm_bwd: LstmIds,
    pub relations: [ParamId; 6],
    pub self_w: ParamId,
    pub layer_gate_w: ParamId,
    pub layer_gate_b: ParamId,
    pub attention_w: ParamId,
    pub attention_b: ParamId,
    pub question_gate_w: ParamId,
    pub question_gate_b: ParamId,
    pub similarity_w: ParamId,
    pub similarity_b: ParamId,
    pub hidden_w: ParamId,
    pub hidden_b: ParamId,
    pub score_w: ParamId,
    pub score_b: ParamId,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmVars {
    pub w_input: Var,
    pub w_hidden: Var,
    pub bias: Var,
}

/// Tape leaves for every parameter, mirroring [`ParamIds`].
#[derive(Clone, Copy, Debug)]
pub struct ModelVars {
    pub node_proj_w: Var,
    pub node_proj_b: Var,
    pub lstm_fwd: LstmVars,
    pub lstm_bwd: LstmVars,
    pub relations: [Var; 6],
    pub self_w: Var,
    pub layer_gate_w: Var,
    pub layer_gate_b: Var,
    pub attention_w: Var,
    pub attention_b: Var,
    pub question_gate_w: Var,
    pub question_gate_b: Var,
    pub similarity_w: Var,
    pub similarity_b: Var,
    pub hidden_w: Var,
    pub hidden_b: Var,
    pub score_w: Var,
    pub score_b: Var,
}

impl ParamIds {
    /// Picks this model's leaves out of a per-parameter leaf list.
    pub fn vars(&self, leaves: &[Var]) -> ModelVars {
        let v = |id: ParamId| leaves[id.index()];
        let lstm = |l: &LstmIds| LstmVars {
            w_input: v(l.w_input),
            w_hidden: v(l.w_hidden),
            bias: v(l.bias),
        };
        ModelVars {
            node_proj_w: v(self.node_proj_w),
            node_proj_b: v(self.node_proj_b),
            lstm_fwd: lstm(&self.lstm_fwd),
            lstm_bwd: lstm(&self.lstm_bwd),
            relations: self.relations.map(v),
            self_w: v(self.self_w),
            layer_gate_w: v(self.layer_gate_w),
            layer_gate_b: v(self.layer_gate_b),
            attention_w: v(self.attention_w),
            attention_b: v(self.attention_b),
            question_gate_w: v(self.question_gate_w),
            question_gate_b: v(self.question_gate_b),
            similarity_w: v(self.similarity_w),
            similarity_b: v(self.similarity_b),
            hidden_w: v(self.hidden_w),
            hidden_b: v(self.hidden_b),
            score_w: v(self.score_w),
            score_b: v(self.score_b),
        }
    }
}

struct Init {
    rng: ChaCha8Rng,
    set: ParameterSet,
}

impl Init {
    /// Glorot-uniform matrix.
    fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> Result<ParamId> {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| self.rng.random_range(-limit..limit)).collect();
        Ok(self.set.add(name, Tensor::new(vec![rows, cols], data)?)?)
    }

    fn zeros(&mut self, name: &str, len: usize) -> Result<ParamId> {
        Ok(self.set.add(name, Tensor::zeros(&[len]))?)
    }

    fn lstm(&mut self, prefix: &str, input: usize, hidden: usize) -> Result<LstmIds> {
        Ok(LstmIds {
            w_input: self.matrix(&format!("{prefix}.w_input"), input, 4 * hidden)?,
            w_hidden: self.matrix(&format!("{prefix}.w_hidden"), hidden, 4 * hidden)?,
            bias: self.zeros(&format!("{prefix}.bias"), 4 * hidden)?,
        })
    }
}

/// Builds the parameter set with Glorot-uniform weights and zero biases.
pub fn init_params(config: &ModelConfig) -> Result<(ParameterSet, ParamIds)> {
    config.validate()?;
    let d = config.d;
    let e = config.embed_dim;
    let gate_width = if config.scalar_question_gate { 1 } else { d };
    let mut init = Init {
        rng: ChaCha8Rng::seed_from_u64(config.init_seed),
        set: ParameterSet::new(),
    };
    let node_proj_w = init.matrix("node_proj.weight", 2 * e, d)?;
    let node_proj_b = init.zeros("node_proj.bias", d)?;
    let lstm_fwd = init.lstm("question.fwd", e, d / 2)?;
    let lstm_bwd = init.lstm("question.bwd", e, d / 2)?;
    let mut relations = Vec::with_capacity(6);
    for r in EdgeType::ALL {
        relations.push(init.matrix(&format!("rgcn.relation.{}", r.name()), d, d)?);
    }
    let relations: [ParamId; 6] = relations.try_into().expect("six relations");
    let ids = ParamIds {
        node_proj_w,
        node_proj_b,
        lstm_fwd,
        lstm_bwd,
        relations,
        self_w: init.matrix("rgcn.self", d, d)?,
        layer_gate_w: init.matrix("layer_gate.weight", 2 * d, d)?,
        layer_gate_b: init.zeros("layer_gate.bias", d)?,
        attention_w: init.matrix("question_attention.weight", 2 * d, 1)?,
        attention_b: init.zeros("question_attention.bias", 1)?,
        question_gate_w: init.matrix("question_gate.weight", 2 * d, gate_width)?,
        question_gate_b: init.zeros("question_gate.bias", gate_width)?,
        similarity_w: init.matrix("similarity.weight", 3 * d, d)?,
        similarity_b: init.zeros("similarity.bias", d)?,
        hidden_w: init.matrix("output.hidden.weight", 4 * d, d)?,
        hidden_b: init.zeros("output.hidden.bias", d)?,
        score_w: init.matrix("output.score.weight", d, 1)?,
        score_b: init.zeros("output.score.bias", 1)?,
    };
    Ok((init.set, ids))
}

/// Recovers parameter handles from names, for checkpoints.
pub fn ids_from_names(set: &ParameterSet) -> Result<ParamIds> {
    let id = |n: &str| set.id(n);
    let lstm = |p: &str| -> Result<LstmIds> {
        Ok(LstmIds {
            w_input: id(&format!("{p}.w_input"))?,
            w_hidden: id(&format!("{p}.w_hidden"))?,
            bias: id(&format!("{p}.bias"))?,
        })
    };
    let mut relations = Vec::with_capacity(6);
    for r in EdgeType::ALL {
        relations.push(id(&format!("rgcn.relation.{}", r.name()))?);
    }
    Ok(ParamIds {
        node_proj_w: id("node_proj.weight")?,
        node_proj_b: id("node_proj.bias")?,
        lstm_fwd: lstm("question.fwd")?,
        lstm_bwd: lstm("question.bwd")?,
        relations: relations.try_into().expect("six relations"),
        self_w: id("rgcn.self")?,
        layer_gate_w: id("layer_gate.weight")?,
        layer_gate_b: id("layer_gate.bias")?,
        attention_w: id("question_attention.weight")?,
        attention_b: id("question_attention.bias")?,
        question_gate_w: id("question_gate.weight")?,
        question_gate_b: id("question_gate.bias")?,
        similarity_w: id("similarity.weight")?,
        similarity_b: id("similarity.bias")?,
        hidden_w: id("output.hidden.weight")?,
        hidden_b: id("output.hidden.bias")?,
        score_w: id("output.score.weight")?,
        score_b: id("output.score.bias")?,
    })
}
