//! Op recording and the reverse sweep.

use std::cell::RefCell;

use super::broadcast::{broadcast_dims, map_index};
use super::{Shape, TensorError, Value};

struct Node {
    output: Value,
    backward: Box<dyn Fn(&[f64])>,
}

/// Record of one forward pass. Every op appends a node holding its output and
/// a closure that routes the output gradient to the inputs; [`Tape::backward`]
/// walks the nodes once in reverse insertion order, which is a valid
/// topological order because inputs always predate outputs.
///
/// Build a fresh tape per forward pass and drop it afterwards.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.borrow().len()
    }

    fn push(&self, output: Value, backward: impl Fn(&[f64]) + 'static) {
        self.nodes.borrow_mut().push(Node {
            output,
            backward: Box::new(backward),
        });
    }

    /// Accumulate d`loss`/d`v` into the grad buffer of every value `v`
    /// recorded on this tape (and every leaf with `requires_grad`).
    ///
    /// Intermediate gradients are reset at the start of each call; leaf
    /// gradients accumulate across calls until [`Value::zero_grad`].
    pub fn backward(&self, loss: &Value) -> Result<(), TensorError> {
        if loss.numel() != 1 {
            return Err(TensorError::NonScalarLoss(loss.shape().clone()));
        }
        let nodes = self.nodes.borrow();
        if !nodes
            .iter()
            .any(|n| std::rc::Rc::ptr_eq(&n.output.0, &loss.0))
        {
            return Err(TensorError::LossNotOnTape);
        }
        for node in nodes.iter() {
            node.output.zero_grad();
        }
        loss.seed_unit_grad();
        for node in nodes.iter().rev() {
            let guard = node.output.0.grad.borrow();
            let g = guard.as_deref().expect("outputs zeroed before the sweep");
            (node.backward)(g);
        }
        Ok(())
    }

    /// Matrix product of two rank-2 values, `[m x k] . [k x n] -> [m x n]`.
    pub fn matmul(&self, a: &Value, b: &Value) -> Result<Value, TensorError> {
        let (ad, bd) = (a.shape().dims(), b.shape().dims());
        if ad.len() != 2 {
            return Err(TensorError::RankMismatch {
                op: "matmul",
                expected: 2,
                shape: a.shape().clone(),
            });
        }
        if bd.len() != 2 {
            return Err(TensorError::RankMismatch {
                op: "matmul",
                expected: 2,
                shape: b.shape().clone(),
            });
        }
        if ad[1] != bd[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: a.shape().clone(),
                rhs: b.shape().clone(),
            });
        }
        let (m, k, n) = (ad[0], ad[1], bd[1]);
        let out_data = matmul_raw(&a.data(), &b.data(), m, k, n);
        let out = Value::from_op(out_data, Shape::assume(vec![m, n]));
        let (a2, b2) = (a.clone(), b.clone());
        self.push(out.clone(), move |g| {
            if a2.wants_grad() {
                // dA = G . B^T
                a2.accumulate_grad(&matmul_nt(g, &b2.data(), m, n, k));
            }
            if b2.wants_grad() {
                // dB = A^T . G
                b2.accumulate_grad(&matmul_tn(&a2.data(), g, m, k, n));
            }
        });
        Ok(out)
    }

    /// Elementwise sum with broadcasting.
    pub fn add(&self, a: &Value, b: &Value) -> Result<Value, TensorError> {
        let out_dims = out_dims_for("add", a, b)?;
        let out_data = ew_forward(&out_dims, a, b, |x, y| x + y);
        let out = Value::from_op(out_data, Shape::assume(out_dims.clone()));
        let (a2, b2) = (a.clone(), b.clone());
        self.push(out.clone(), move |g| {
            if a2.wants_grad() {
                a2.accumulate_grad(&reduce_to(&out_dims, a2.shape().dims(), g, 1.0));
            }
            if b2.wants_grad() {
                b2.accumulate_grad(&reduce_to(&out_dims, b2.shape().dims(), g, 1.0));
            }
        });
        Ok(out)
    }

    /// Elementwise difference with broadcasting.
    pub fn sub(&self, a: &Value, b: &Value) -> Result<Value, TensorError> {
        let out_dims = out_dims_for("sub", a, b)?;
        let out_data = ew_forward(&out_dims, a, b, |x, y| x - y);
        let out = Value::from_op(out_data, Shape::assume(out_dims.clone()));
        let (a2, b2) = (a.clone(), b.clone());
        self.push(out.clone(), move |g| {
            if a2.wants_grad() {
                a2.accumulate_grad(&reduce_to(&out_dims, a2.shape().dims(), g, 1.0));
            }
            if b2.wants_grad() {
                b2.accumulate_grad(&reduce_to(&out_dims, b2.shape().dims(), g, -1.0));
            }
        });
        Ok(out)
    }

    /// Elementwise (Hadamard) product with broadcasting.
    pub fn mul(&self, a: &Value, b: &Value) -> Result<Value, TensorError> {
        let out_dims = out_dims_for("mul", a, b)?;
        let out_data = ew_forward(&out_dims, a, b, |x, y| x * y);
        let out = Value::from_op(out_data, Shape::assume(out_dims.clone()));
        let (a2, b2) = (a.clone(), b.clone());
        self.push(out.clone(), move |g| {
            if a2.wants_grad() {
                let bd = b2.data();
                a2.accumulate_grad(&grad_times_other(
                    &out_dims,
                    a2.shape().dims(),
                    g,
                    b2.shape().dims(),
                    &bd,
                ));
            }
            if b2.wants_grad() {
                let ad = a2.data();
                b2.accumulate_grad(&grad_times_other(
                    &out_dims,
                    b2.shape().dims(),
                    g,
                    a2.shape().dims(),
                    &ad,
                ));
            }
        });
        Ok(out)
    }

    /// Multiply every element by the constant `c`.
    pub fn scale(&self, x: &Value, c: f64) -> Value {
        let out_data: Vec<f64> = x.data().iter().map(|v| v * c).collect();
        let out = Value::from_op(out_data, x.shape().clone());
        let x2 = x.clone();
        self.push(out.clone(), move |g| {
            if x2.wants_grad() {
                let dx: Vec<f64> = g.iter().map(|gi| gi * c).collect();
                x2.accumulate_grad(&dx);
            }
        });
        out
    }

    /// Elementwise hyperbolic tangent.
    pub fn tanh(&self, x: &Value) -> Value {
        let out_data: Vec<f64> = x.data().iter().map(|v| v.tanh()).collect();
        let out = Value::from_op(out_data, x.shape().clone());
        let (x2, out2) = (x.clone(), out.clone());
        self.push(out.clone(), move |g| {
            if x2.wants_grad() {
                let y = out2.data();
                let dx: Vec<f64> = g
                    .iter()
                    .zip(y.iter())
                    .map(|(gi, yi)| gi * (1.0 - yi * yi))
                    .collect();
                x2.accumulate_grad(&dx);
            }
        });
        out
    }

    /// Elementwise logistic sigmoid, `1 / (1 + exp(-x))`.
    pub fn sigmoid(&self, x: &Value) -> Value {
        let out_data: Vec<f64> = x.data().iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect();
        let out = Value::from_op(out_data, x.shape().clone());
        let (x2, out2) = (x.clone(), out.clone());
        self.push(out.clone(), move |g| {
            if x2.wants_grad() {
                let y = out2.data();
                let dx: Vec<f64> = g
                    .iter()
                    .zip(y.iter())
                    .map(|(gi, yi)| gi * yi * (1.0 - yi))
                    .collect();
                x2.accumulate_grad(&dx);
            }
        });
        out
    }

    /// Mean over one axis; the axis is removed from the shape (a rank-1 input
    /// collapses to a scalar).
    pub fn mean_over_axis(&self, x: &Value, axis: usize) -> Result<Value, TensorError> {
        let dims = x.shape().dims();
        if axis >= dims.len() {
            return Err(TensorError::AxisOutOfRange {
                op: "mean_over_axis",
                axis,
                shape: x.shape().clone(),
            });
        }
        let outer: usize = dims[..axis].iter().product();
        let extent = dims[axis];
        let inner: usize = dims[axis + 1..].iter().product();
        let mut out_dims: Vec<usize> = dims.to_vec();
        out_dims.remove(axis);
        if out_dims.is_empty() {
            out_dims.push(1);
        }
        let mut out_data = vec![0.0; outer * inner];
        {
            let xd = x.data();
            for o in 0..outer {
                for e in 0..extent {
                    let base = (o * extent + e) * inner;
                    let obase = o * inner;
                    for i in 0..inner {
                        out_data[obase + i] += xd[base + i];
                    }
                }
            }
        }
        let inv = 1.0 / extent as f64;
        for v in out_data.iter_mut() {
            *v *= inv;
        }
        let out = Value::from_op(out_data, Shape::assume(out_dims));
        let x2 = x.clone();
        self.push(out.clone(), move |g| {
            if !x2.wants_grad() {
                return;
            }
            let mut dx = vec![0.0; outer * extent * inner];
            for o in 0..outer {
                for e in 0..extent {
                    let base = (o * extent + e) * inner;
                    let obase = o * inner;
                    for i in 0..inner {
                        dx[base + i] = g[obase + i] * inv;
                    }
                }
            }
            x2.accumulate_grad(&dx);
        });
        Ok(out)
    }

    /// View the same elements under a different shape (row-major order kept).
    pub fn reshape(&self, x: &Value, dims: &[usize]) -> Result<Value, TensorError> {
        let shape = Shape::new(dims.to_vec())?;
        if shape.numel() != x.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: x.shape().clone(),
                rhs: shape,
            });
        }
        let out = Value::from_op(x.data().to_vec(), shape);
        let x2 = x.clone();
        self.push(out.clone(), move |g| {
            if x2.wants_grad() {
                x2.accumulate_grad(g);
            }
        });
        Ok(out)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum_all(&self, x: &Value) -> Value {
        let s: f64 = x.data().iter().sum();
        let out = Value::from_op(vec![s], Shape::assume(vec![1]));
        let x2 = x.clone();
        self.push(out.clone(), move |g| {
            if x2.wants_grad() {
                x2.accumulate_grad(&vec![g[0]; x2.numel()]);
            }
        });
        out
    }

    /// Mean over the batch of per-row softmax cross-entropy losses.
    ///
    /// `logits` is `[batch x classes]`; `labels[b]` is the target class of
    /// row `b`. Row softmax is max-subtracted, so large logits stay finite.
    pub fn softmax_cross_entropy(
        &self,
        logits: &Value,
        labels: &[usize],
    ) -> Result<Value, TensorError> {
        let dims = logits.shape().dims();
        if dims.len() != 2 {
            return Err(TensorError::RankMismatch {
                op: "softmax_cross_entropy",
                expected: 2,
                shape: logits.shape().clone(),
            });
        }
        let (batch, classes) = (dims[0], dims[1]);
        if labels.len() != batch {
            return Err(TensorError::LabelCount {
                expected: batch,
                got: labels.len(),
            });
        }
        for &label in labels {
            if label >= classes {
                return Err(TensorError::LabelOutOfRange { label, classes });
            }
        }

        let mut probs = vec![0.0; batch * classes];
        let mut loss = 0.0;
        {
            let ld = logits.data();
            for (b, &label) in labels.iter().enumerate() {
                let row = &ld[b * classes..(b + 1) * classes];
                let prow = &mut probs[b * classes..(b + 1) * classes];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum_exp = 0.0;
                for (p, &x) in prow.iter_mut().zip(row) {
                    *p = (x - max).exp();
                    sum_exp += *p;
                }
                for p in prow.iter_mut() {
                    *p /= sum_exp;
                }
                loss += sum_exp.ln() - (row[label] - max);
            }
        }
        loss /= batch as f64;

        let out = Value::from_op(vec![loss], Shape::assume(vec![1]));
        let logits2 = logits.clone();
        let labels2 = labels.to_vec();
        self.push(out.clone(), move |g| {
            if !logits2.wants_grad() {
                return;
            }
            let scale = g[0] / batch as f64;
            let mut dl = vec![0.0; probs.len()];
            for (b, &label) in labels2.iter().enumerate() {
                for c in 0..classes {
                    let target = if c == label { 1.0 } else { 0.0 };
                    dl[b * classes + c] = scale * (probs[b * classes + c] - target);
                }
            }
            logits2.accumulate_grad(&dl);
        });
        Ok(out)
    }
}

fn out_dims_for(op: &'static str, a: &Value, b: &Value) -> Result<Vec<usize>, TensorError> {
    broadcast_dims(a.shape().dims(), b.shape().dims()).ok_or_else(|| TensorError::ShapeMismatch {
        op,
        lhs: a.shape().clone(),
        rhs: b.shape().clone(),
    })
}

fn ew_forward(out_dims: &[usize], a: &Value, b: &Value, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let (ad, bd) = (a.data(), b.data());
    if a.shape() == b.shape() {
        return ad.iter().zip(bd.iter()).map(|(&x, &y)| f(x, y)).collect();
    }
    let (a_dims, b_dims) = (a.shape().dims(), b.shape().dims());
    let total: usize = out_dims.iter().product();
    (0..total)
        .map(|i| {
            f(
                ad[map_index(out_dims, a_dims, i)],
                bd[map_index(out_dims, b_dims, i)],
            )
        })
        .collect()
}

/// Fold the output gradient back down to `src_dims` by summing over the
/// stretched dimensions, scaled by `sign`.
fn reduce_to(out_dims: &[usize], src_dims: &[usize], g: &[f64], sign: f64) -> Vec<f64> {
    if src_dims == out_dims {
        return g.iter().map(|v| v * sign).collect();
    }
    let mut acc = vec![0.0; src_dims.iter().product()];
    for (i, gv) in g.iter().enumerate() {
        acc[map_index(out_dims, src_dims, i)] += gv * sign;
    }
    acc
}

/// Gradient of a broadcast product w.r.t. one operand: the output gradient
/// times the *other* operand, folded down to `target_dims`.
fn grad_times_other(
    out_dims: &[usize],
    target_dims: &[usize],
    g: &[f64],
    other_dims: &[usize],
    other: &[f64],
) -> Vec<f64> {
    if target_dims == out_dims && other_dims == out_dims {
        return g.iter().zip(other).map(|(gi, oi)| gi * oi).collect();
    }
    let mut acc = vec![0.0; target_dims.iter().product()];
    for (i, gv) in g.iter().enumerate() {
        acc[map_index(out_dims, target_dims, i)] += gv * other[map_index(out_dims, other_dims, i)];
    }
    acc
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// `G . B^T` where `g` is `[m x n]` and `b` is `[k x n]`.
fn matmul_nt(g: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let b_row = &b[p * n..(p + 1) * n];
            out[i * k + p] = g_row.iter().zip(b_row).map(|(&x, &y)| x * y).sum();
        }
    }
    out
}

/// `A^T . G` where `a` is `[m x k]` and `g` is `[m x n]`.
fn matmul_tn(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in out_row.iter_mut().zip(g_row) {
                *o += aip * gv;
            }
        }
    }
    out
}
