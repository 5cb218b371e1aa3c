//! Graph convolution over a fully learned adjacency.

use rand::Rng;

use super::{glorot_uniform, scoped, uniform_adjacency};
use crate::tensor::{Tape, TensorError, Value};

/// One graph convolution: `H' = tanh(A . H . W)` where `A` is a trainable
/// `[K x K]` vertex mixing matrix (initialized to the uniform average) and
/// `W` a trainable `[F_in x F_out]` feature map.
pub struct GraphConvLayer {
    pub adjacency: Value,
    pub weight: Value,
}

impl GraphConvLayer {
    pub fn new<R: Rng>(
        vertices: usize,
        f_in: usize,
        f_out: usize,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        Ok(GraphConvLayer {
            adjacency: uniform_adjacency(vertices)?,
            weight: glorot_uniform(rng, f_in, f_out)?,
        })
    }

    /// `h` is `[K x F_in]`; returns `[K x F_out]`.
    pub fn forward(&self, tape: &Tape, h: &Value) -> Result<Value, TensorError> {
        let mixed = tape.matmul(&self.adjacency, h)?;
        let mapped = tape.matmul(&mixed, &self.weight)?;
        Ok(tape.tanh(&mapped))
    }

    pub fn parameters(&self) -> Vec<(String, Value)> {
        vec![
            ("adjacency".to_string(), self.adjacency.clone()),
            ("weight".to_string(), self.weight.clone()),
        ]
    }
}

/// Two stacked graph convolutions with a skip connection:
/// `out = gc2(gc1(H)) + skip(H)`. The skip is the identity when the feature
/// widths already agree, otherwise a trainable `[F_in x F_out]` projection.
pub struct ResidualGcBlock {
    pub gc1: GraphConvLayer,
    pub gc2: GraphConvLayer,
    pub projection: Option<Value>,
}

impl ResidualGcBlock {
    pub fn new<R: Rng>(
        vertices: usize,
        f_in: usize,
        f_out: usize,
        rng: &mut R,
    ) -> Result<Self, TensorError> {
        let gc1 = GraphConvLayer::new(vertices, f_in, f_out, rng)?;
        let gc2 = GraphConvLayer::new(vertices, f_out, f_out, rng)?;
        let projection = if f_in == f_out {
            None
        } else {
            Some(glorot_uniform(rng, f_in, f_out)?)
        };
        Ok(ResidualGcBlock {
            gc1,
            gc2,
            projection,
        })
    }

    /// `h` is `[K x F_in]`; returns `[K x F_out]`.
    pub fn forward(&self, tape: &Tape, h: &Value) -> Result<Value, TensorError> {
        let through = self.gc2.forward(tape, &self.gc1.forward(tape, h)?)?;
        let skip = match &self.projection {
            None => h.clone(),
            Some(p) => tape.matmul(h, p)?,
        };
        tape.add(&through, &skip)
    }

    pub fn parameters(&self) -> Vec<(String, Value)> {
        let mut params = scoped("gc1", self.gc1.parameters());
        params.extend(scoped("gc2", self.gc2.parameters()));
        if let Some(p) = &self.projection {
            params.push(("skip.weight".to_string(), p.clone()));
        }
        params
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn conv_applies_mixing_map_and_tanh() {
        // A = I and W = I reduce the layer to elementwise tanh.
        let mut layer = GraphConvLayer::new(2, 2, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        layer.adjacency = Value::new(vec![1.0, 0.0, 0.0, 1.0], &[2, 2], true).unwrap();
        layer.weight = Value::new(vec![1.0, 0.0, 0.0, 1.0], &[2, 2], true).unwrap();
        let h = Value::new(vec![0.5, 0.0, -0.5, 1.0], &[2, 2], false).unwrap();
        let tape = Tape::new();
        let out = layer.forward(&tape, &h).unwrap();
        let expected = [
            0.46211715726000974,
            0.0,
            -0.46211715726000974,
            1.0_f64.tanh(),
        ];
        for (o, e) in out.data().iter().zip(expected) {
            assert!((o - e).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_adjacency_averages_identical_rows_to_a_fixed_point() {
        // When every vertex carries the same features, A = uniform leaves the
        // mixed features equal to the originals.
        let layer = GraphConvLayer::new(3, 2, 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let h = Value::new(vec![0.3, -0.2].repeat(3), &[3, 2], false).unwrap();
        let tape = Tape::new();
        let mixed = tape.matmul(&layer.adjacency, &h).unwrap();
        for (m, e) in mixed.data().iter().zip(h.data().iter()) {
            assert!((m - e).abs() < 1e-12);
        }
    }

    #[test]
    fn block_uses_identity_skip_when_widths_match() {
        let block = ResidualGcBlock::new(4, 6, 6, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert!(block.projection.is_none());
        let names: Vec<String> = block.parameters().into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            vec!["gc1.adjacency", "gc1.weight", "gc2.adjacency", "gc2.weight"]
        );

        // out - gc2(gc1(h)) recovers h exactly.
        let h = Value::new(
            (0..24).map(|i| (i as f64) / 24.0 - 0.5).collect(),
            &[4, 6],
            false,
        )
        .unwrap();
        let tape = Tape::new();
        let out = block.forward(&tape, &h).unwrap();
        let through = block
            .gc2
            .forward(&tape, &block.gc1.forward(&tape, &h).unwrap())
            .unwrap();
        for ((o, t), e) in out
            .data()
            .iter()
            .zip(through.data().iter())
            .zip(h.data().iter())
        {
            assert!((o - t - e).abs() < 1e-15);
        }
    }

    #[test]
    fn block_projects_skip_when_widths_differ() {
        let block = ResidualGcBlock::new(4, 6, 8, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let p = block.projection.as_ref().expect("projection required");
        assert_eq!(p.shape().dims(), &[6, 8]);
        assert!(block.parameters().iter().any(|(n, _)| n == "skip.weight"));

        let h = Value::new(vec![0.1; 24], &[4, 6], false).unwrap();
        let tape = Tape::new();
        let out = block.forward(&tape, &h).unwrap();
        assert_eq!(out.shape().dims(), &[4, 8]);
    }

    #[test]
    fn block_output_stays_bounded_by_tanh_plus_skip() {
        // tanh caps the through-path at 1 in magnitude; with identity skip the
        // output can never exceed |h| + 1.
        let block = ResidualGcBlock::new(3, 4, 4, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let h = Value::new(vec![3.0; 12], &[3, 4], false).unwrap();
        let tape = Tape::new();
        let out = block.forward(&tape, &h).unwrap();
        assert!(out.data().iter().all(|v| v.abs() <= 4.0));
    }
}
