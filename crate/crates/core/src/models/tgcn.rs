//! Temporal graph convolutional classifier.
//!
//! A window of `W` frames becomes a `[K x 2W]` matrix whose row `k` is the
//! full trajectory of keypoint `k`, `[x(0), y(0), ..., x(W-1), y(W-1)]`.
//! Residual graph-convolution blocks mix trajectories across keypoints while
//! remapping them in feature space; the final `[K x F]` features fold back
//! onto the time axis as `[K, W, F/W]`, are averaged over time, and the
//! resulting `K * F/W` vector feeds the linear head.

use rand::Rng;

use super::{frame_row, ModelError, TgcnConfig};
use crate::data::pad_frames;
use crate::nn::{scoped, LinearHead, ResidualGcBlock};
use crate::tensor::{Tape, Value};

pub struct TgcnModel {
    pub config: TgcnConfig,
    pub blocks: Vec<ResidualGcBlock>,
    pub head: LinearHead,
}

impl TgcnModel {
    pub fn new<R: Rng>(config: TgcnConfig, rng: &mut R) -> Result<Self, ModelError> {
        if config.vertices == 0 || config.window < 2 || config.blocks == 0 {
            return Err(ModelError::BadConfig(
                "vertices, blocks and a window of at least 2 frames are required".to_string(),
            ));
        }
        if config.classes < 2 {
            return Err(ModelError::BadConfig(
                "a classifier needs at least 2 classes".to_string(),
            ));
        }
        if config.hidden == 0 || config.hidden % config.window != 0 {
            return Err(ModelError::BadConfig(format!(
                "hidden width {} must be a positive multiple of the window {}",
                config.hidden, config.window
            )));
        }
        let mut blocks = Vec::with_capacity(config.blocks);
        let mut f_in = 2 * config.window;
        for _ in 0..config.blocks {
            blocks.push(ResidualGcBlock::new(
                config.vertices,
                f_in,
                config.hidden,
                rng,
            )?);
            f_in = config.hidden;
        }
        let head = LinearHead::new(self::pooled_width(&config), config.classes, rng)?;
        Ok(TgcnModel {
            config,
            blocks,
            head,
        })
    }

    /// `[1 x classes]` pooled logits for a clip. Sequences of exactly
    /// `window` frames pass through as-is (the training path). Longer clips
    /// take their centered `window`-frame span and shorter ones repeat the
    /// last frame, so evaluation sees the same contiguous, native-rate
    /// windows training does.
    pub fn forward(&self, tape: &Tape, frames: &[Vec<[f64; 2]>]) -> Result<Value, ModelError> {
        if frames.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        let fitted;
        let frames = if frames.len() == self.config.window {
            frames
        } else if frames.len() > self.config.window {
            let start = (frames.len() - self.config.window) / 2;
            &frames[start..start + self.config.window]
        } else {
            fitted = pad_frames(frames.to_vec(), self.config.window);
            &fitted
        };
        let input = self.trajectory_matrix(frames)?;
        let mut h = input;
        for block in &self.blocks {
            h = block.forward(tape, &h)?;
        }
        let (k, w) = (self.config.vertices, self.config.window);
        let per_frame = self.config.hidden / w;
        let unfolded = tape.reshape(&h, &[k, w, per_frame])?;
        let pooled = tape.mean_over_axis(&unfolded, 1)?;
        let features = tape.reshape(&pooled, &[1, k * per_frame])?;
        Ok(self.head.forward(tape, &features)?)
    }

    /// `[K x 2W]` trajectory-per-vertex arrangement of a window.
    fn trajectory_matrix(&self, frames: &[Vec<[f64; 2]>]) -> Result<Value, ModelError> {
        let (k, w) = (self.config.vertices, self.config.window);
        let mut data = vec![0.0; k * 2 * w];
        for (t, frame) in frames.iter().enumerate() {
            let row = frame_row(frame, t, k)?;
            for v in 0..k {
                data[v * 2 * w + 2 * t] = row[2 * v];
                data[v * 2 * w + 2 * t + 1] = row[2 * v + 1];
            }
        }
        Ok(Value::new(data, &[k, 2 * w], false)?)
    }

    pub fn parameters(&self) -> Vec<(String, Value)> {
        let mut params = Vec::new();
        for (i, block) in self.blocks.iter().enumerate() {
            params.extend(scoped(&format!("block{i}"), block.parameters()));
        }
        params.extend(scoped("head", self.head.parameters()));
        params
    }
}

/// Width of the pooled feature vector feeding the head.
pub(crate) fn pooled_width(config: &TgcnConfig) -> usize {
    config.vertices * (config.hidden / config.window)
}
