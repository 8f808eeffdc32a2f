use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use pathqa_autodiff::{Parameter, ParameterSet};
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::ids_from_names;
use super::Model;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "pathqa-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Named parameter tensors plus the configuration that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub params: Vec<Parameter>,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            params: model.params.iter().cloned().collect(),
        }
    }

    /// Rebuilds the model, checking every tensor against a freshly
    /// initialized model of the stored configuration.
    pub fn into_model(self) -> Result<Model> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let reference = Model::new(self.config.clone())?;
        if reference.params.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                reference.params.len(),
                self.params.len()
            )));
        }
        let mut set = ParameterSet::new();
        for p in self.params {
            let expected = reference.params.tensor(reference.params.id(&p.name)?);
            if expected.shape() != p.tensor.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{}` has shape {:?}, configuration implies {:?}",
                    p.name,
                    p.tensor.shape(),
                    expected.shape()
                )));
            }
            set.add_parameter(p)?;
        }
        let ids = ids_from_names(&set)?;
        Ok(Model {
            config: self.config,
            params: set,
            ids,
        })
    }
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &Checkpoint::from_model(model))?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Loads a checkpoint. With `expected` set, shape-determining settings
/// must match it.
pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<Model> {
    let ck: Checkpoint = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if let Some(exp) = expected {
        if !exp.shape_compatible(&ck.config) {
            return Err(Error::Checkpoint(format!(
                "checkpoint has d={}, embed_dim={}, scalar_question_gate={}; requested d={}, embed_dim={}, \
                 scalar_question_gate={}",
                ck.config.d,
                ck.config.embed_dim,
                ck.config.scalar_question_gate,
                exp.d,
                exp.embed_dim,
                exp.scalar_question_gate
            )));
        }
    }
    ck.into_model()
}
