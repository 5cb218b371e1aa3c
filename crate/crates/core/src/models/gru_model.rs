//! Recurrent classifier.
//!
//! Each frame flattens to a `[1 x 2K]` coordinate row and drives a stacked
//! GRU; the shared head turns every hidden state into per-frame logits, and
//! the pooled logits are their mean over time.

use rand::Rng;

use super::{frame_row, GruConfig, ModelError, ModelOutput};
use crate::nn::{scoped, GruStack, LinearHead};
use crate::tensor::{Tape, Value};

pub struct GruModel {
    pub config: GruConfig,
    pub stack: GruStack,
    pub head: LinearHead,
}

impl GruModel {
    pub fn new<R: Rng>(config: GruConfig, rng: &mut R) -> Result<Self, ModelError> {
        if config.keypoints == 0 || config.hidden == 0 || config.layers == 0 {
            return Err(ModelError::BadConfig(
                "keypoints, hidden width and layer count must be positive".to_string(),
            ));
        }
        if config.classes < 2 {
            return Err(ModelError::BadConfig(
                "a classifier needs at least 2 classes".to_string(),
            ));
        }
        let stack = GruStack::new(2 * config.keypoints, config.hidden, config.layers, rng)?;
        let head = LinearHead::new(config.hidden, config.classes, rng)?;
        Ok(GruModel {
            config,
            stack,
            head,
        })
    }

    /// Consume every frame of the clip, whatever its length.
    pub fn forward(
        &self,
        tape: &Tape,
        frames: &[Vec<[f64; 2]>],
    ) -> Result<ModelOutput, ModelError> {
        if frames.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        let mut rows = Vec::with_capacity(frames.len());
        for (t, frame) in frames.iter().enumerate() {
            let row = frame_row(frame, t, self.config.keypoints)?;
            rows.push(Value::new(row, &[1, 2 * self.config.keypoints], false)?);
        }
        let states = self.stack.forward(tape, &rows)?;
        let mut step_logits = Vec::with_capacity(states.len());
        for h in &states {
            step_logits.push(self.head.forward(tape, h)?);
        }
        let mut sum: Option<Value> = None;
        for logits in &step_logits {
            sum = Some(match sum {
                None => logits.clone(),
                Some(acc) => tape.add(&acc, logits)?,
            });
        }
        let pooled_logits = tape.scale(
            &sum.expect("at least one frame"),
            1.0 / step_logits.len() as f64,
        );
        Ok(ModelOutput {
            pooled_logits,
            step_logits,
        })
    }

    pub fn parameters(&self) -> Vec<(String, Value)> {
        let mut params = scoped("gru", self.stack.parameters());
        params.extend(scoped("head", self.head.parameters()));
        params
    }
}
