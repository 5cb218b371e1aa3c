//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! [`Value`] is a shaped, row-major buffer. Operations are recorded on a
//! [`Tape`] as they execute (define-by-run); [`Tape::backward`] replays the
//! records in reverse and accumulates gradients into every participating
//! value that wants them. Tapes are rebuilt per forward pass, so variable
//! sequence lengths cost nothing.
//!
//! Values are immutable after construction except for their gradient buffer;
//! the one sanctioned exception is [`Value::data_mut`], which optimizers use
//! to update parameters *between* forward/backward passes.

mod broadcast;
mod tape;

pub use tape::Tape;

use std::cell::{Ref, RefCell, RefMut};
use std::fmt;
use std::rc::Rc;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape must have at least one dimension")]
    EmptyShape,
    #[error("shape {0:?} has a zero extent; every dimension must be >= 1")]
    ZeroExtent(Vec<usize>),
    #[error("data length {len} does not match shape {shape} ({expected} elements)")]
    DataLength {
        len: usize,
        shape: Shape,
        expected: usize,
    },
    #[error("{op}: incompatible shapes {lhs} and {rhs}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },
    #[error("{op}: expected a rank-{expected} input, got shape {shape}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        shape: Shape,
    },
    #[error("{op}: axis {axis} out of range for shape {shape}")]
    AxisOutOfRange {
        op: &'static str,
        axis: usize,
        shape: Shape,
    },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("expected {expected} labels for batch of {expected}, got {got}")]
    LabelCount { expected: usize, got: usize },
    #[error("backward requires a scalar loss, got shape {0}")]
    NonScalarLoss(Shape),
    #[error("loss is not an output of this tape")]
    LossNotOnTape,
}

/// Ordered list of positive extents. Element count is the product.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self, TensorError> {
        let dims = dims.into();
        if dims.is_empty() {
            return Err(TensorError::EmptyShape);
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(TensorError::ZeroExtent(dims));
        }
        Ok(Shape(dims))
    }

    /// Construct from dims already known to be valid (op outputs).
    pub(crate) fn assume(dims: Vec<usize>) -> Self {
        debug_assert!(!dims.is_empty() && dims.iter().all(|&d| d >= 1));
        Shape(dims)
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", parts.join("x"))
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Shape({})", self)
    }
}

struct ValueInner {
    shape: Shape,
    data: RefCell<Vec<f64>>,
    requires_grad: bool,
    /// Produced by a tape op (as opposed to a user-created leaf).
    from_op: bool,
    grad: RefCell<Option<Vec<f64>>>,
}

/// A shaped f64 buffer participating in reverse-mode differentiation.
///
/// Cheap to clone (shared handle). Gradients accumulate additively into the
/// grad buffer across backward passes; [`Value::zero_grad`] resets it.
#[derive(Clone)]
pub struct Value(Rc<ValueInner>);

impl Value {
    pub fn new(data: Vec<f64>, dims: &[usize], requires_grad: bool) -> Result<Self, TensorError> {
        let shape = Shape::new(dims.to_vec())?;
        if data.len() != shape.numel() {
            return Err(TensorError::DataLength {
                len: data.len(),
                expected: shape.numel(),
                shape,
            });
        }
        Ok(Self::leaf(data, shape, requires_grad))
    }

    pub fn zeros(dims: &[usize], requires_grad: bool) -> Result<Self, TensorError> {
        let shape = Shape::new(dims.to_vec())?;
        let n = shape.numel();
        Ok(Self::leaf(vec![0.0; n], shape, requires_grad))
    }

    pub fn scalar(x: f64) -> Self {
        Self::leaf(vec![x], Shape::assume(vec![1]), false)
    }

    fn leaf(data: Vec<f64>, shape: Shape, requires_grad: bool) -> Self {
        Value(Rc::new(ValueInner {
            shape,
            data: RefCell::new(data),
            requires_grad,
            from_op: false,
            grad: RefCell::new(None),
        }))
    }

    pub(crate) fn from_op(data: Vec<f64>, shape: Shape) -> Self {
        debug_assert_eq!(data.len(), shape.numel());
        Value(Rc::new(ValueInner {
            shape,
            data: RefCell::new(data),
            requires_grad: false,
            from_op: true,
            grad: RefCell::new(None),
        }))
    }

    pub fn shape(&self) -> &Shape {
        &self.0.shape
    }

    pub fn numel(&self) -> usize {
        self.0.shape.numel()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn data(&self) -> Ref<'_, [f64]> {
        Ref::map(self.0.data.borrow(), |v| v.as_slice())
    }

    /// Mutable access to the underlying buffer, for parameter updates between
    /// forward/backward passes. Mutating data referenced by a live tape
    /// invalidates that tape's gradients.
    pub fn data_mut(&self) -> RefMut<'_, [f64]> {
        RefMut::map(self.0.data.borrow_mut(), |v| v.as_mut_slice())
    }

    /// The single element of a scalar value.
    ///
    /// Panics if the value is not scalar.
    pub fn item(&self) -> f64 {
        let data = self.data();
        assert_eq!(data.len(), 1, "item() on non-scalar value");
        data[0]
    }

    pub fn grad(&self) -> Option<Ref<'_, [f64]>> {
        Ref::filter_map(self.0.grad.borrow(), |g| g.as_deref()).ok()
    }

    /// Reset the gradient buffer to all zeros (allocating it if absent).
    pub fn zero_grad(&self) {
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(buf) => buf.fill(0.0),
            None => *slot = Some(vec![0.0; self.numel()]),
        }
    }

    /// Whether backward should spend time producing a gradient here.
    pub(crate) fn wants_grad(&self) -> bool {
        self.0.from_op || self.0.requires_grad
    }

    pub(crate) fn seed_unit_grad(&self) {
        let mut slot = self.0.grad.borrow_mut();
        let buf = slot.get_or_insert_with(|| vec![0.0; self.numel()]);
        buf[0] += 1.0;
    }

    pub(crate) fn accumulate_grad(&self, contribution: &[f64]) {
        if !self.wants_grad() {
            return;
        }
        debug_assert_eq!(contribution.len(), self.numel());
        let mut slot = self.0.grad.borrow_mut();
        let buf = slot.get_or_insert_with(|| vec![0.0; contribution.len()]);
        for (g, c) in buf.iter_mut().zip(contribution) {
            *g += c;
        }
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Value")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("data", &self.0.data.borrow())
            .finish()
    }
}

/// Row-wise softmax of a flat `rows x classes` buffer, max-subtracted for
/// stability. Plain function, not a tape op; prediction code uses it to turn
/// logits into probabilities.
pub fn softmax_rows(logits: &[f64], classes: usize) -> Vec<f64> {
    assert!(classes > 0 && logits.len() % classes == 0);
    let mut out = vec![0.0; logits.len()];
    for (row_in, row_out) in logits.chunks(classes).zip(out.chunks_mut(classes)) {
        let max = row_in.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (o, &x) in row_out.iter_mut().zip(row_in) {
            *o = (x - max).exp();
            sum += *o;
        }
        for o in row_out.iter_mut() {
            *o /= sum;
        }
    }
    out
}
