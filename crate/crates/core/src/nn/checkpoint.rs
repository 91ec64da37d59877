//! Versioned JSON container for models, optimizer state and datasets.
//!
//! Floats are written in shortest round-trip form and parsed exactly, so a
//! save/load cycle reproduces every bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::layer::LayerSpec;
use super::model::Model;
use super::params::ParamVector;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::fsutil;

pub const CHECKPOINT_FORMAT: &str = "shiftleak-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub rng_seed: u64,
    pub params: ParamVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<Adam>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<LabeledDataset>,
}

impl Checkpoint {
    pub fn empty() -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            model: None,
            optimizer: None,
            dataset: None,
        }
    }

    pub fn from_model(model: &Model, optimizer: Option<&Adam>) -> Self {
        Self {
            model: Some(ModelState {
                input_shape: model.input_shape().to_vec(),
                layers: model.layers().to_vec(),
                rng_seed: model.rng_seed(),
                params: model.params().clone(),
            }),
            optimizer: optimizer.cloned(),
            ..Self::empty()
        }
    }

    pub fn with_dataset(mut self, dataset: LabeledDataset) -> Self {
        self.dataset = Some(dataset);
        self
    }

    pub fn to_model(&self) -> Result<Model> {
        let state = self
            .model
            .as_ref()
            .ok_or_else(|| Error::Consistency("checkpoint holds no model".into()))?;
        Model::from_parts(
            state.input_shape.clone(),
            state.layers.clone(),
            state.params.clone(),
            state.rng_seed,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Consistency(format!("not a checkpoint: format {:?}", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Consistency(format!("unsupported checkpoint version {}", ckpt.version)));
        }
        if let (Some(model), Some(opt)) = (&ckpt.model, &ckpt.optimizer) {
            if model.params.layout() != opt.layout() {
                return Err(Error::Layout("optimizer state does not match the model".into()));
            }
        }
        // Validates the architecture against the stored layout.
        if ckpt.model.is_some() {
            ckpt.to_model()?;
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
