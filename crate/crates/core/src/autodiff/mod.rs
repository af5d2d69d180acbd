//! Reverse-mode automatic differentiation over dense row-major matrices.
//!
//! Values live on a [`Tape`]; a [`Var`] is a cheap handle into it. Vectors are
//! `1 x n` rows, scalars are `1 x 1`. Broadcasting exists only between a scalar
//! and a tensor; row/column broadcasts have explicit ops.

mod backward;
mod ops;

use std::cell::{Cell as StdCell, Ref, RefCell};

pub use backward::Gradients;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum AdError {
    #[error("shape mismatch in {op}: {a:?} vs {b:?}")]
    ShapeMismatch { op: &'static str, a: [usize; 2], b: [usize; 2] },
    #[error("non-finite value produced by {0}")]
    NonFiniteValue(&'static str),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar([usize; 2]),
    #[error("index {index} out of range for {len} entries")]
    IndexOutOfRange { index: usize, len: usize },
}

/// Dense `rows x cols` matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data length must equal rows*cols");
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Self::new(rows, cols, vec![v; rows * cols])
    }

    pub fn scalar(v: f64) -> Self {
        Self::new(1, 1, vec![v])
    }

    /// A `1 x n` row vector.
    pub fn row(data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(1, n, data)
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "item() on a non-scalar tensor");
        self.data[0]
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = vec![0.0; self.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Tensor::new(self.cols, self.rows, out)
    }

    pub fn matmul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.cols, other.rows);
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[p * m..(p + 1) * m];
                for (o, &b) in row.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Tensor::new(n, m, out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::new(self.rows, self.cols, self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn zip(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        assert_eq!(self.shape(), other.shape());
        Tensor::new(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Recorded operation with the ids of its inputs.
#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize),
    Exp(usize),
    Ln(usize),
    Recip(usize),
    Sqrt(usize),
    Square(usize),
    Softplus(usize),
    Sigmoid(usize),
    Relu(usize),
    MatMul(usize, usize),
    Transpose(usize),
    Sum(usize),
    Mean(usize),
    RowSums(usize),
    ColSums(usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    MulCol(usize, usize),
    LayerNorm(usize, f64),
    RowSoftmax(usize),
    ConcatCols(Vec<usize>),
    GatherRows(usize, Vec<usize>),
    ScatterAddRows(usize, Vec<usize>),
    MinCombine(usize, usize),
    StraightThrough(usize),
}

pub(crate) struct Node {
    pub value: Tensor,
    pub op: Op,
    pub requires_grad: bool,
}

/// Append-only record of a computation. Single-threaded; use one tape per sample.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    checked: bool,
    fault: StdCell<Option<&'static str>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape that flags NaN/Inf outputs; see [`Tape::status`].
    pub fn checked() -> Self {
        Self { checked: true, ..Self::default() }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Trainable leaf.
    pub fn param(&self, t: Tensor) -> Var<'_> {
        self.push(t, Op::Leaf, true, "param")
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, t: Tensor) -> Var<'_> {
        self.push(t, Op::Leaf, false, "constant")
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.constant(Tensor::scalar(v))
    }

    /// First non-finite value seen in checked mode.
    pub fn status(&self) -> Result<(), AdError> {
        match self.fault.get() {
            Some(op) => Err(AdError::NonFiniteValue(op)),
            None => Ok(()),
        }
    }

    pub(crate) fn push(&self, value: Tensor, op: Op, requires_grad: bool, name: &'static str) -> Var<'_> {
        if self.checked && self.fault.get().is_none() && !value.all_finite() {
            self.fault.set(Some(name));
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op, requires_grad });
        Var { tape: self, id: nodes.len() - 1 }
    }

    pub(crate) fn nodes(&self) -> Ref<'_, Vec<Node>> {
        self.nodes.borrow()
    }
}

/// Handle to a value on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var#{} {:?}", self.id, self.shape())
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id].value)
    }

    pub fn to_tensor(&self) -> Tensor {
        self.value().clone()
    }

    pub fn shape(&self) -> [usize; 2] {
        self.value().shape()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.id].requires_grad
    }

    /// Reverse pass from this scalar.
    pub fn backward(&self) -> Result<Gradients, AdError> {
        backward::backward(self.tape, self.id)
    }
}


/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn numeric_gradient(f: impl Fn(&Tensor) -> f64, x: &Tensor, h: f64) -> Tensor {
    let mut out = Tensor::zeros(x.rows, x.cols);
    let mut probe = x.clone();
    for k in 0..x.len() {
        let orig = probe.data[k];
        probe.data[k] = orig + h;
        let up = f(&probe);
        probe.data[k] = orig - h;
        let down = f(&probe);
        probe.data[k] = orig;
        out.data[k] = (up - down) / (2.0 * h);
    }
    out
}

/// Largest relative error between two gradients, with `floor` guarding tiny magnitudes.
pub fn max_rel_error(a: &Tensor, b: &Tensor, floor: f64) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub use ops::argmax;
