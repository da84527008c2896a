//! Model checkpoints as JSON.
//!
//! Floats are written in shortest round-trip decimal form, so a reloaded
//! model reproduces predictions bit for bit.

use std::fs;
use std::path::Path;

use lwp_core::model::{Dense, Encoder, Head};
use lwp_core::{Activation, Matrix, ModelState};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub layer_sizes: Vec<usize>,
    pub activation: String,
    pub encoder: Vec<LayerFile>,
    pub heads: Vec<HeadFile>,
    pub task_count: usize,
}

/// Row-major weights (`fan_in x fan_out`) and bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFile {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadFile {
    pub task: usize,
    pub classes: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl From<&ModelState> for ModelFile {
    fn from(m: &ModelState) -> Self {
        let enc = m.encoder();
        ModelFile {
            layer_sizes: enc.sizes().to_vec(),
            activation: enc.activation().name().to_string(),
            encoder: enc
                .layers()
                .iter()
                .map(|l| LayerFile {
                    weight: l.weight.as_slice().to_vec(),
                    bias: l.bias.as_slice().to_vec(),
                })
                .collect(),
            heads: m
                .heads()
                .iter()
                .map(|h| HeadFile {
                    task: h.task,
                    classes: h.classes(),
                    weight: h.weight.as_slice().to_vec(),
                    bias: h.bias.as_slice().to_vec(),
                })
                .collect(),
            task_count: m.task_count(),
        }
    }
}

impl ModelFile {
    pub fn into_model(self) -> lwp_core::Result<ModelState> {
        let activation = Activation::parse(&self.activation).ok_or_else(|| lwp_core::Error::InvalidParam {
            name: "activation",
            reason: format!("unknown activation {:?}", self.activation),
        })?;
        let sizes = &self.layer_sizes;
        if self.encoder.len() + 1 != sizes.len() {
            return Err(lwp_core::Error::InvalidParam {
                name: "layer_sizes",
                reason: format!("{} layers for {} sizes", self.encoder.len(), sizes.len()),
            });
        }
        let layers = self
            .encoder
            .into_iter()
            .zip(sizes.windows(2))
            .map(|(l, w)| {
                Ok(Dense {
                    weight: Matrix::from_vec(w[0], w[1], l.weight)?,
                    bias: Matrix::from_vec(1, w[1], l.bias)?,
                })
            })
            .collect::<lwp_core::Result<Vec<_>>>()?;
        let encoder = Encoder::from_layers(sizes, activation, layers)?;
        let latent = encoder.latent_dim();
        let heads = self
            .heads
            .into_iter()
            .map(|h| {
                Ok(Head {
                    task: h.task,
                    weight: Matrix::from_vec(latent, h.classes, h.weight)?,
                    bias: Matrix::from_vec(1, h.classes, h.bias)?,
                })
            })
            .collect::<lwp_core::Result<Vec<_>>>()?;
        if heads.len() != self.task_count {
            return Err(lwp_core::Error::InvalidParam {
                name: "task_count",
                reason: format!("{} heads but task_count {}", heads.len(), self.task_count),
            });
        }
        ModelState::from_parts(encoder, heads)
    }
}

pub fn save(model: &ModelState, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(&ModelFile::from(model)).expect("model serializes");
    fs::write(path, json).map_err(Error::io(path))
}

pub fn load(path: &Path) -> Result<ModelState> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    file.into_model().map_err(|e| Error::format(path, e.to_string()))
}
