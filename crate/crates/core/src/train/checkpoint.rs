//! Checkpoints: one json document holding the model configuration, the gloss
//! vocabulary in label order, the best validation accuracy, and every
//! parameter tensor by name.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::models::{Model, ModelConfig};
use crate::train::TrainError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    #[serde(flatten)]
    pub config: ModelConfig,
    pub glosses: Vec<String>,
    pub val_top1: f64,
    pub params: Vec<ParamEntry>,
}

pub struct LoadedCheckpoint {
    pub model: Model,
    pub glosses: Vec<String>,
    pub val_top1: f64,
}

pub fn save_checkpoint(
    path: &Path,
    model: &Model,
    glosses: &[String],
    val_top1: f64,
) -> Result<(), TrainError> {
    if glosses.len() != model.classes() {
        return Err(TrainError::GlossCount {
            glosses: glosses.len(),
            classes: model.classes(),
        });
    }
    let checkpoint = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        config: model.config(),
        glosses: glosses.to_vec(),
        val_top1,
        params: model
            .parameters()
            .into_iter()
            .map(|(name, p)| ParamEntry {
                name,
                shape: p.shape().dims().to_vec(),
                data: p.data().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&checkpoint).expect("checkpoints serialize");
    fs::write(path, json + "\n").map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Rebuild the model a checkpoint describes and restore its parameters. The
/// stored tensors must cover the model's parameter list exactly, name by name
/// and shape by shape.
pub fn load_checkpoint(path: &Path) -> Result<LoadedCheckpoint, TrainError> {
    let text = fs::read_to_string(path).map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let checkpoint: Checkpoint =
        serde_json::from_str(&text).map_err(|source| TrainError::Json {
            path: path.to_path_buf(),
            source,
        })?;
    if checkpoint.format_version != CHECKPOINT_VERSION {
        return Err(TrainError::UnsupportedVersion(checkpoint.format_version));
    }
    if checkpoint.glosses.len() != checkpoint.config.classes() {
        return Err(TrainError::GlossCount {
            glosses: checkpoint.glosses.len(),
            classes: checkpoint.config.classes(),
        });
    }

    // The freshly drawn weights are overwritten below, so any seed does.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = Model::new(&checkpoint.config, &mut rng)?;

    let mut stored: std::collections::HashMap<String, ParamEntry> = checkpoint
        .params
        .into_iter()
        .map(|e| (e.name.clone(), e))
        .collect();
    for (name, param) in model.parameters() {
        let entry = stored.remove(&name).ok_or_else(|| TrainError::BadParam {
            name: name.clone(),
            reason: "missing from the checkpoint".to_string(),
        })?;
        if entry.shape != param.shape().dims() {
            return Err(TrainError::BadParam {
                name,
                reason: format!(
                    "stored shape {:?} does not match the model's {:?}",
                    entry.shape,
                    param.shape().dims()
                ),
            });
        }
        if entry.data.len() != param.numel() {
            return Err(TrainError::BadParam {
                name,
                reason: format!(
                    "stored {} values but the shape holds {}",
                    entry.data.len(),
                    param.numel()
                ),
            });
        }
        param.data_mut().copy_from_slice(&entry.data);
    }
    if let Some(name) = stored.into_keys().next() {
        return Err(TrainError::BadParam {
            name,
            reason: "is not a model parameter".to_string(),
        });
    }

    Ok(LoadedCheckpoint {
        model,
        glosses: checkpoint.glosses,
        val_top1: checkpoint.val_top1,
    })
}
