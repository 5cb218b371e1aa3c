//! The classification head.

use rand::Rng;

use super::{glorot_uniform, zero_bias};
use crate::tensor::{Tape, TensorError, Value};

/// Affine map to class logits: `[B x F] -> [B x C]` via `x W + b`.
pub struct LinearHead {
    pub weight: Value,
    pub bias: Value,
}

impl LinearHead {
    pub fn new<R: Rng>(features: usize, classes: usize, rng: &mut R) -> Result<Self, TensorError> {
        Ok(LinearHead {
            weight: glorot_uniform(rng, features, classes)?,
            bias: zero_bias(classes)?,
        })
    }

    pub fn forward(&self, tape: &Tape, x: &Value) -> Result<Value, TensorError> {
        tape.add(&tape.matmul(x, &self.weight)?, &self.bias)
    }

    pub fn parameters(&self) -> Vec<(String, Value)> {
        vec![
            ("weight".to_string(), self.weight.clone()),
            ("bias".to_string(), self.bias.clone()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_is_x_w_plus_b() {
        let mut head = LinearHead::new(2, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        head.weight = Value::new(vec![1.0, 2.0, 3.0, 4.0], &[2, 2], true).unwrap();
        head.bias = Value::new(vec![10.0, 20.0], &[1, 2], true).unwrap();
        let x = Value::new(vec![1.0, 1.0, 2.0, 0.5], &[2, 2], false).unwrap();
        let tape = Tape::new();
        let y = head.forward(&tape, &x).unwrap();
        assert_eq!(&y.data()[..], &[14.0, 26.0, 13.5, 26.0]);
    }

    #[test]
    fn bias_broadcasts_over_batch_rows_with_summed_gradient() {
        let head = LinearHead::new(3, 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let x = Value::new(vec![0.5; 12], &[4, 3], false).unwrap();
        let tape = Tape::new();
        let y = head.forward(&tape, &x).unwrap();
        assert_eq!(y.shape().dims(), &[4, 2]);
        let loss = tape.sum_all(&y);
        tape.backward(&loss).unwrap();
        // Four rows each contribute 1 to every bias coordinate.
        assert_eq!(&head.bias.grad().unwrap()[..], &[4.0, 4.0]);
    }
}
