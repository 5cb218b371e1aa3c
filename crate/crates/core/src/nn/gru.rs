//! Gated recurrent units, run one frame at a time.

use rand::Rng;

use super::{glorot_uniform, scoped, zero_bias};
use crate::tensor::{Tape, TensorError, Value};

/// A single GRU cell over `[1 x input]` rows:
///
/// ```text
/// z = sigmoid(x Wz + h Uz + bz)        update gate
/// r = sigmoid(x Wr + h Ur + br)        reset gate
/// c = tanh(x Wh + (r * h) Uh + bh)     candidate state
/// h' = (1 - z) * h + z * c
/// ```
///
/// With all parameters zero, `z = r = 1/2` and `c = 0`, so a step halves the
/// previous state.
pub struct GruCell {
    pub w_z: Value,
    pub u_z: Value,
    pub b_z: Value,
    pub w_r: Value,
    pub u_r: Value,
    pub b_r: Value,
    pub w_h: Value,
    pub u_h: Value,
    pub b_h: Value,
    input: usize,
    hidden: usize,
}

impl GruCell {
    /// Weight matrices draw Glorot uniform values in the fixed order
    /// `Wz, Uz, Wr, Ur, Wh, Uh`; biases start at zero.
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Result<Self, TensorError> {
        Ok(GruCell {
            w_z: glorot_uniform(rng, input, hidden)?,
            u_z: glorot_uniform(rng, hidden, hidden)?,
            b_z: zero_bias(hidden)?,
            w_r: glorot_uniform(rng, input, hidden)?,
            u_r: glorot_uniform(rng, hidden, hidden)?,
            b_r: zero_bias(hidden)?,
            w_h: glorot_uniform(rng, input, hidden)?,
            u_h: glorot_uniform(rng, hidden, hidden)?,
            b_h: zero_bias(hidden)?,
            input,
            hidden,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    /// `x` is `[1 x input]`, `h_prev` is `[1 x hidden]`; returns the next
    /// `[1 x hidden]` state.
    pub fn step(&self, tape: &Tape, x: &Value, h_prev: &Value) -> Result<Value, TensorError> {
        let z = tape.sigmoid(&self.gate(tape, x, h_prev, &self.w_z, &self.u_z, &self.b_z)?);
        let r = tape.sigmoid(&self.gate(tape, x, h_prev, &self.w_r, &self.u_r, &self.b_r)?);
        let gated = tape.mul(&r, h_prev)?;
        let cand = tape.tanh(&self.gate(tape, x, &gated, &self.w_h, &self.u_h, &self.b_h)?);
        let keep = tape.sub(&Value::scalar(1.0), &z)?;
        let carried = tape.mul(&keep, h_prev)?;
        let injected = tape.mul(&z, &cand)?;
        tape.add(&carried, &injected)
    }

    fn gate(
        &self,
        tape: &Tape,
        x: &Value,
        h: &Value,
        w: &Value,
        u: &Value,
        b: &Value,
    ) -> Result<Value, TensorError> {
        let xw = tape.matmul(x, w)?;
        let hu = tape.matmul(h, u)?;
        tape.add(&tape.add(&xw, &hu)?, b)
    }

    pub fn parameters(&self) -> Vec<(String, Value)> {
        vec![
            ("w_z".to_string(), self.w_z.clone()),
            ("u_z".to_string(), self.u_z.clone()),
            ("b_z".to_string(), self.b_z.clone()),
            ("w_r".to_string(), self.w_r.clone()),
            ("u_r".to_string(), self.u_r.clone()),
            ("b_r".to_string(), self.b_r.clone()),
            ("w_h".to_string(), self.w_h.clone()),
            ("u_h".to_string(), self.u_h.clone()),
            ("b_h".to_string(), self.b_h.clone()),
        ]
    }
}

/// Stacked GRU layers. Layer 0 consumes the input rows; each later layer
/// consumes the hidden sequence of the one below. States start at zero.
pub struct GruStack {
    pub cells: Vec<GruCell>,
}

impl GruStack {
    pub fn new<R: Rng>(
        input: usize,
        hidden: usize,
        layers: usize,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        assert!(layers >= 1, "a GRU stack needs at least one layer");
        let mut cells = Vec::with_capacity(layers);
        cells.push(GruCell::new(input, hidden, rng)?);
        for _ in 1..layers {
            cells.push(GruCell::new(hidden, hidden, rng)?);
        }
        Ok(GruStack { cells })
    }

    pub fn hidden_size(&self) -> usize {
        self.cells[0].hidden_size()
    }

    /// Run the stack over a frame sequence of `[1 x input]` rows; returns the
    /// top layer's `[1 x hidden]` state at every step.
    pub fn forward(&self, tape: &Tape, xs: &[Value]) -> Result<Vec<Value>, TensorError> {
        let mut sequence: Vec<Value> = xs.to_vec();
        for cell in &self.cells {
            let mut h = Value::zeros(&[1, cell.hidden_size()], false)?;
            let mut outputs = Vec::with_capacity(sequence.len());
            for x in &sequence {
                h = cell.step(tape, x, &h)?;
                outputs.push(h.clone());
            }
            sequence = outputs;
        }
        Ok(sequence)
    }

    pub fn parameters(&self) -> Vec<(String, Value)> {
        let mut params = Vec::new();
        for (i, cell) in self.cells.iter().enumerate() {
            params.extend(scoped(&format!("layer{i}"), cell.parameters()));
        }
        params
    }
}
