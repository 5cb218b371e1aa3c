//! Layers: graph convolutions with trainable adjacency, GRU cells, and a
//! linear classification head.
//!
//! Every layer owns its parameters as [`Value`]s, exposes them through
//! `parameters()` as `(name, value)` pairs with stable dotted names (the
//! checkpoint format keys on them), and runs its forward pass on a caller
//! supplied [`Tape`].

mod graph;
mod gru;
mod linear;

pub use graph::{GraphConvLayer, ResidualGcBlock};
pub use gru::{GruCell, GruStack};
pub use linear::LinearHead;

use rand::Rng;

use crate::tensor::{TensorError, Value};

/// Glorot uniform bound, `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// A trainable `[fan_in x fan_out]` matrix drawn from the Glorot uniform
/// distribution. Entries are drawn in row-major order, so a given rng state
/// always produces the same matrix.
pub fn glorot_uniform<R: Rng>(
    rng: &mut R,
    fan_in: usize,
    fan_out: usize,
) -> Result<Value, TensorError> {
    let limit = glorot_limit(fan_in, fan_out);
    let data: Vec<f64> = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-limit..limit))
        .collect();
    Value::new(data, &[fan_in, fan_out], true)
}

/// A trainable `[vertices x vertices]` adjacency with every entry `1/vertices`
/// (each row averages all vertices before training moves it).
pub fn uniform_adjacency(vertices: usize) -> Result<Value, TensorError> {
    let fill = 1.0 / vertices as f64;
    Value::new(vec![fill; vertices * vertices], &[vertices, vertices], true)
}

/// A trainable all-zero `[1 x width]` bias row.
pub fn zero_bias(width: usize) -> Result<Value, TensorError> {
    Value::zeros(&[1, width], true)
}

/// Prefix every parameter name with `scope.`, for nesting layers.
pub(crate) fn scoped(scope: &str, params: Vec<(String, Value)>) -> Vec<(String, Value)> {
    params
        .into_iter()
        .map(|(name, value)| (format!("{scope}.{name}"), value))
        .collect()
}
