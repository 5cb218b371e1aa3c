//! The two classifier families and the shared prediction interface.
//!
//! Both models consume normalized per-frame keypoint coordinates
//! (`frames[t][k] = [x, y]`) and produce a `[1 x classes]` row of pooled
//! logits; the GRU additionally exposes per-frame logits for its stepwise
//! loss term.

mod gru_model;
mod tgcn;

pub use gru_model::GruModel;
pub use tgcn::TgcnModel;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::KEYPOINTS;
use crate::tensor::{Tape, TensorError, Value};

/// Frames a fixed-length window covers by default.
pub const DEFAULT_WINDOW: usize = 50;
/// Residual graph-convolution blocks in the default temporal GCN.
pub const DEFAULT_BLOCKS: usize = 2;
/// Stacked recurrent layers in the default GRU.
pub const DEFAULT_GRU_LAYERS: usize = 2;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("frame {frame} has {got} keypoints, the model expects {expected}")]
    KeypointMismatch {
        frame: usize,
        got: usize,
        expected: usize,
    },
    #[error("cannot run a model on an empty frame sequence")]
    EmptySequence,
    #[error("invalid model config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Tgcn,
    Gru,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Tgcn => "tgcn",
            ModelKind::Gru => "gru",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tgcn" => Ok(ModelKind::Tgcn),
            "gru" => Ok(ModelKind::Gru),
            other => Err(format!("unknown model {other:?} (tgcn or gru)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TgcnConfig {
    /// Graph vertices (keypoints).
    pub vertices: usize,
    /// Frames per input window.
    pub window: usize,
    /// Feature width inside the residual blocks; must be a multiple of
    /// `window` so features fold back onto the time axis for pooling.
    pub hidden: usize,
    pub blocks: usize,
    pub classes: usize,
}

impl TgcnConfig {
    /// The standard geometry: 55 vertices, 50-frame windows, feature width
    /// twice the window, two blocks.
    pub fn for_classes(classes: usize) -> Self {
        TgcnConfig {
            vertices: KEYPOINTS,
            window: DEFAULT_WINDOW,
            hidden: 2 * DEFAULT_WINDOW,
            blocks: DEFAULT_BLOCKS,
            classes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GruConfig {
    /// Keypoints per frame; each frame becomes a `2 * keypoints` input row.
    pub keypoints: usize,
    pub hidden: usize,
    pub layers: usize,
    pub classes: usize,
}

impl GruConfig {
    /// The standard geometry: 55 keypoints, two layers, hidden width picked
    /// by [`gru_hidden_for_classes`].
    pub fn for_classes(classes: usize) -> Self {
        GruConfig {
            keypoints: KEYPOINTS,
            hidden: gru_hidden_for_classes(classes),
            layers: DEFAULT_GRU_LAYERS,
            classes,
        }
    }
}

/// Hidden width tiers by vocabulary size. The tier nearest to the class
/// count wins; ties go to the smaller tier.
const GRU_HIDDEN_TIERS: [(usize, usize); 4] = [(100, 64), (300, 64), (1000, 128), (2000, 128)];

pub fn gru_hidden_for_classes(classes: usize) -> usize {
    GRU_HIDDEN_TIERS
        .iter()
        .min_by_key(|(size, _)| (size.abs_diff(classes), *size))
        .map(|&(_, hidden)| hidden)
        .expect("tier table is non-empty")
}

/// Model architecture and geometry, as stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_kind", content = "config", rename_all = "lowercase")]
pub enum ModelConfig {
    Tgcn(TgcnConfig),
    Gru(GruConfig),
}

impl ModelConfig {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelConfig::Tgcn(_) => ModelKind::Tgcn,
            ModelConfig::Gru(_) => ModelKind::Gru,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            ModelConfig::Tgcn(c) => c.classes,
            ModelConfig::Gru(c) => c.classes,
        }
    }

    /// The standard geometry of the given kind for a vocabulary size.
    pub fn standard(kind: ModelKind, classes: usize) -> Self {
        match kind {
            ModelKind::Tgcn => ModelConfig::Tgcn(TgcnConfig::for_classes(classes)),
            ModelKind::Gru => ModelConfig::Gru(GruConfig::for_classes(classes)),
        }
    }
}

pub struct ModelOutput {
    /// `[1 x classes]` logits pooled over time.
    pub pooled_logits: Value,
    /// Per-frame logits; empty for models without a stepwise read-out.
    pub step_logits: Vec<Value>,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    /// Pooled logits per class.
    pub logits: Vec<f64>,
    /// All classes, best first.
    pub ranking: Vec<usize>,
}

pub enum Model {
    Tgcn(TgcnModel),
    Gru(GruModel),
}

impl Model {
    pub fn new<R: Rng>(config: &ModelConfig, rng: &mut R) -> Result<Self, ModelError> {
        Ok(match config {
            ModelConfig::Tgcn(c) => Model::Tgcn(TgcnModel::new(c.clone(), rng)?),
            ModelConfig::Gru(c) => Model::Gru(GruModel::new(c.clone(), rng)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Tgcn(_) => ModelKind::Tgcn,
            Model::Gru(_) => ModelKind::Gru,
        }
    }

    pub fn config(&self) -> ModelConfig {
        match self {
            Model::Tgcn(m) => ModelConfig::Tgcn(m.config.clone()),
            Model::Gru(m) => ModelConfig::Gru(m.config.clone()),
        }
    }

    pub fn classes(&self) -> usize {
        self.config().classes()
    }

    pub fn parameters(&self) -> Vec<(String, Value)> {
        match self {
            Model::Tgcn(m) => m.parameters(),
            Model::Gru(m) => m.parameters(),
        }
    }

    pub fn forward(
        &self,
        tape: &Tape,
        frames: &[Vec<[f64; 2]>],
    ) -> Result<ModelOutput, ModelError> {
        match self {
            Model::Tgcn(m) => Ok(ModelOutput {
                pooled_logits: m.forward(tape, frames)?,
                step_logits: Vec::new(),
            }),
            Model::Gru(m) => m.forward(tape, frames),
        }
    }

    /// Training loss for one clip. Both models penalize the pooled logits
    /// with cross entropy; the GRU adds the mean of the per-frame cross
    /// entropies so early frames receive a learning signal too.
    pub fn loss(
        &self,
        tape: &Tape,
        frames: &[Vec<[f64; 2]>],
        label: usize,
    ) -> Result<Value, ModelError> {
        let output = self.forward(tape, frames)?;
        let pooled = tape.softmax_cross_entropy(&output.pooled_logits, &[label])?;
        if output.step_logits.is_empty() {
            return Ok(pooled);
        }
        let mut step_sum: Option<Value> = None;
        for logits in &output.step_logits {
            let ce = tape.softmax_cross_entropy(logits, &[label])?;
            step_sum = Some(match step_sum {
                None => ce,
                Some(acc) => tape.add(&acc, &ce)?,
            });
        }
        let steps = output.step_logits.len() as f64;
        let step_mean = tape.scale(&step_sum.expect("at least one step"), 1.0 / steps);
        Ok(tape.add(&pooled, &step_mean)?)
    }

    /// Rank all classes for a clip. No gradients are recorded.
    pub fn predict(&self, frames: &[Vec<[f64; 2]>]) -> Result<Prediction, ModelError> {
        let tape = Tape::new();
        let output = self.forward(&tape, frames)?;
        let logits = output.pooled_logits.data().to_vec();
        let ranking = rank_classes(&logits);
        Ok(Prediction { logits, ranking })
    }
}

/// Class indices ordered by descending logit; equal logits keep ascending
/// index order.
pub fn rank_classes(logits: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]));
    order
}

/// Flatten one frame to an `[x0, y0, x1, y1, ...]` row, checking arity.
pub(crate) fn frame_row(
    frame: &[[f64; 2]],
    index: usize,
    expected: usize,
) -> Result<Vec<f64>, ModelError> {
    if frame.len() != expected {
        return Err(ModelError::KeypointMismatch {
            frame: index,
            got: frame.len(),
            expected,
        });
    }
    let mut row = Vec::with_capacity(2 * expected);
    for p in frame {
        row.push(p[0]);
        row.push(p[1]);
    }
    Ok(row)
}
