use super::{AdError, Op, Tensor, Var};

type R<'t> = Result<Var<'t>, AdError>;

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(data: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in data.iter().enumerate() {
        if v > data[best] {
            best = i;
        }
    }
    best
}

fn broadcast_pair(a: &Tensor, b: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, AdError> {
    if a.shape() == b.shape() {
        Ok(a.zip(b, f))
    } else if b.is_scalar() {
        let s = b.data[0];
        Ok(a.map(|x| f(x, s)))
    } else if a.is_scalar() {
        let s = a.data[0];
        Ok(b.map(|x| f(s, x)))
    } else {
        Err(AdError::ShapeMismatch { op, a: a.shape(), b: b.shape() })
    }
}

pub(crate) fn layer_norm_forward(x: &Tensor, eps: f64) -> Tensor {
    let d = x.cols;
    let mut out = vec![0.0; x.len()];
    for r in 0..x.rows {
        let row = &x.data[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for (o, v) in out[r * d..(r + 1) * d].iter_mut().zip(row) {
            *o = (v - mean) * inv;
        }
    }
    Tensor::new(x.rows, d, out)
}

impl<'t> Var<'t> {
    fn same_tape(&self, other: &Var<'t>) {
        assert!(std::ptr::eq(self.tape, other.tape), "vars from different tapes");
    }

    fn emit(&self, value: Tensor, op: Op, inputs: &[usize], name: &'static str) -> Var<'t> {
        let rg = {
            let nodes = self.tape.nodes();
            inputs.iter().any(|&i| nodes[i].requires_grad)
        };
        self.tape.push(value, op, rg, name)
    }

    fn binary(
        self,
        other: Var<'t>,
        name: &'static str,
        op: fn(usize, usize) -> Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> R<'t> {
        self.same_tape(&other);
        let v = broadcast_pair(&self.value(), &other.value(), name, f)?;
        Ok(self.emit(v, op(self.id, other.id), &[self.id, other.id], name))
    }

    fn unary(self, name: &'static str, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let v = self.value().map(f);
        self.emit(v, op, &[self.id], name)
    }

    pub fn add(self, other: Var<'t>) -> R<'t> {
        self.binary(other, "add", Op::Add, |a, b| a + b)
    }

    pub fn sub(self, other: Var<'t>) -> R<'t> {
        self.binary(other, "sub", Op::Sub, |a, b| a - b)
    }

    pub fn mul(self, other: Var<'t>) -> R<'t> {
        self.binary(other, "mul", Op::Mul, |a, b| a * b)
    }

    pub fn div(self, other: Var<'t>) -> R<'t> {
        self.binary(other, "div", Op::Div, |a, b| a / b)
    }

    /// Hadamard product with a constant 0/1 mask.
    pub fn mask(self, mask: &Tensor) -> R<'t> {
        let m = self.tape.constant(mask.clone());
        self.mul(m)
    }

    pub fn neg(self) -> Var<'t> {
        self.unary("neg", Op::Neg(self.id), |x| -x)
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        self.unary("scale", Op::Scale(self.id, c), |x| x * c)
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        self.unary("add_scalar", Op::AddScalar(self.id), |x| x + c)
    }

    pub fn exp(self) -> Var<'t> {
        self.unary("exp", Op::Exp(self.id), f64::exp)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary("ln", Op::Ln(self.id), f64::ln)
    }

    pub fn recip(self) -> Var<'t> {
        self.unary("recip", Op::Recip(self.id), |x| 1.0 / x)
    }

    pub fn sqrt(self) -> Var<'t> {
        self.unary("sqrt", Op::Sqrt(self.id), f64::sqrt)
    }

    pub fn square(self) -> Var<'t> {
        self.unary("square", Op::Square(self.id), |x| x * x)
    }

    pub fn softplus(self) -> Var<'t> {
        self.unary("softplus", Op::Softplus(self.id), softplus)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary("sigmoid", Op::Sigmoid(self.id), sigmoid)
    }

    pub fn relu(self) -> Var<'t> {
        self.unary("relu", Op::Relu(self.id), |x| x.max(0.0))
    }

    pub fn matmul(self, other: Var<'t>) -> R<'t> {
        self.same_tape(&other);
        let v = {
            let (a, b) = (self.value(), other.value());
            if a.cols != b.rows {
                return Err(AdError::ShapeMismatch { op: "matmul", a: a.shape(), b: b.shape() });
            }
            a.matmul(&b)
        };
        Ok(self.emit(v, Op::MatMul(self.id, other.id), &[self.id, other.id], "matmul"))
    }

    pub fn t(self) -> Var<'t> {
        let v = self.value().transpose();
        self.emit(v, Op::Transpose(self.id), &[self.id], "transpose")
    }

    pub fn sum(self) -> Var<'t> {
        let v = Tensor::scalar(self.value().sum());
        self.emit(v, Op::Sum(self.id), &[self.id], "sum")
    }

    pub fn mean(self) -> Var<'t> {
        let v = {
            let x = self.value();
            Tensor::scalar(x.sum() / x.len() as f64)
        };
        self.emit(v, Op::Mean(self.id), &[self.id], "mean")
    }

    /// `n x d -> n x 1`.
    pub fn row_sums(self) -> Var<'t> {
        let v = {
            let x = self.value();
            Tensor::new(x.rows, 1, x.data.chunks(x.cols.max(1)).map(|r| r.iter().sum()).collect())
        };
        self.emit(v, Op::RowSums(self.id), &[self.id], "row_sums")
    }

    /// `n x d -> 1 x d`.
    pub fn col_sums(self) -> Var<'t> {
        let v = col_sums(&self.value());
        self.emit(v, Op::ColSums(self.id), &[self.id], "col_sums")
    }

    /// Adds a `1 x d` row to every row.
    pub fn add_row(self, row: Var<'t>) -> R<'t> {
        self.row_op(row, "add_row", Op::AddRow, |a, b| a + b)
    }

    /// Multiplies every row elementwise by a `1 x d` row.
    pub fn mul_row(self, row: Var<'t>) -> R<'t> {
        self.row_op(row, "mul_row", Op::MulRow, |a, b| a * b)
    }

    fn row_op(self, row: Var<'t>, name: &'static str, op: fn(usize, usize) -> Op, f: fn(f64, f64) -> f64) -> R<'t> {
        self.same_tape(&row);
        let v = {
            let (a, r) = (self.value(), row.value());
            if r.rows != 1 || r.cols != a.cols {
                return Err(AdError::ShapeMismatch { op: name, a: a.shape(), b: r.shape() });
            }
            let mut out = a.clone();
            for chunk in out.data.chunks_mut(a.cols.max(1)) {
                for (o, &b) in chunk.iter_mut().zip(&r.data) {
                    *o = f(*o, b);
                }
            }
            out
        };
        Ok(self.emit(v, op(self.id, row.id), &[self.id, row.id], name))
    }

    /// Scales row `i` by entry `i` of an `n x 1` column.
    pub fn mul_col(self, col: Var<'t>) -> R<'t> {
        self.same_tape(&col);
        let v = {
            let (a, c) = (self.value(), col.value());
            if c.cols != 1 || c.rows != a.rows {
                return Err(AdError::ShapeMismatch { op: "mul_col", a: a.shape(), b: c.shape() });
            }
            let mut out = a.clone();
            for (chunk, &s) in out.data.chunks_mut(a.cols.max(1)).zip(&c.data) {
                chunk.iter_mut().for_each(|o| *o *= s);
            }
            out
        };
        Ok(self.emit(v, Op::MulCol(self.id, col.id), &[self.id, col.id], "mul_col"))
    }

    /// Per-row normalization to zero mean and unit variance (no affine part).
    pub fn layer_norm(self, eps: f64) -> Var<'t> {
        let v = layer_norm_forward(&self.value(), eps);
        self.emit(v, Op::LayerNorm(self.id, eps), &[self.id], "layer_norm")
    }

    /// Row-wise softmax restricted to entries where `mask` is nonzero. Masked
    /// entries and fully masked rows come out as zero.
    pub fn masked_row_softmax(self, mask: Option<&Tensor>) -> R<'t> {
        let v = {
            let x = self.value();
            if let Some(m) = mask {
                if m.shape() != x.shape() {
                    return Err(AdError::ShapeMismatch { op: "row_softmax", a: x.shape(), b: m.shape() });
                }
            }
            let d = x.cols;
            let mut out = vec![0.0; x.len()];
            for r in 0..x.rows {
                let on = |c: usize| mask.is_none_or(|m| m.data[r * d + c] != 0.0);
                let row = &x.data[r * d..(r + 1) * d];
                let mx = (0..d).filter(|&c| on(c)).map(|c| row[c]).fold(f64::NEG_INFINITY, f64::max);
                if mx == f64::NEG_INFINITY {
                    continue;
                }
                let mut z = 0.0;
                for c in (0..d).filter(|&c| on(c)) {
                    let e = (row[c] - mx).exp();
                    out[r * d + c] = e;
                    z += e;
                }
                out[r * d..(r + 1) * d].iter_mut().for_each(|o| *o /= z);
            }
            Tensor::new(x.rows, d, out)
        };
        Ok(self.emit(v, Op::RowSoftmax(self.id), &[self.id], "row_softmax"))
    }

    pub fn row_softmax(self) -> Var<'t> {
        self.masked_row_softmax(None).expect("unmasked softmax cannot fail")
    }

    pub fn concat_cols(parts: &[Var<'t>]) -> R<'t> {
        let first = parts.first().expect("concat of nothing");
        let v = {
            let vals: Vec<_> = parts.iter().map(|p| p.value()).collect();
            let rows = vals[0].rows;
            for v in &vals {
                if v.rows != rows {
                    return Err(AdError::ShapeMismatch { op: "concat_cols", a: vals[0].shape(), b: v.shape() });
                }
            }
            let cols: usize = vals.iter().map(|v| v.cols).sum();
            let mut out = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for v in &vals {
                    out.extend_from_slice(&v.data[r * v.cols..(r + 1) * v.cols]);
                }
            }
            Tensor::new(rows, cols, out)
        };
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        Ok(first.emit(v, Op::ConcatCols(ids.clone()), &ids, "concat_cols"))
    }

    /// `out[k] = self[idx[k]]` row-wise.
    pub fn gather_rows(self, idx: &[usize]) -> R<'t> {
        let v = {
            let x = self.value();
            let mut out = Vec::with_capacity(idx.len() * x.cols);
            for &i in idx {
                if i >= x.rows {
                    return Err(AdError::IndexOutOfRange { index: i, len: x.rows });
                }
                out.extend_from_slice(&x.data[i * x.cols..(i + 1) * x.cols]);
            }
            Tensor::new(idx.len(), x.cols, out)
        };
        Ok(self.emit(v, Op::GatherRows(self.id, idx.to_vec()), &[self.id], "gather_rows"))
    }

    /// `out[idx[k]] += self[k]` into an `n x d` zero matrix.
    pub fn scatter_add_rows(self, idx: &[usize], n: usize) -> R<'t> {
        let v = {
            let x = self.value();
            if idx.len() != x.rows {
                return Err(AdError::ShapeMismatch { op: "scatter_add_rows", a: x.shape(), b: [idx.len(), 1] });
            }
            let d = x.cols;
            let mut out = vec![0.0; n * d];
            for (k, &i) in idx.iter().enumerate() {
                if i >= n {
                    return Err(AdError::IndexOutOfRange { index: i, len: n });
                }
                for c in 0..d {
                    out[i * d + c] += x.data[k * d + c];
                }
            }
            Tensor::new(n, d, out)
        };
        Ok(self.emit(v, Op::ScatterAddRows(self.id, idx.to_vec()), &[self.id], "scatter_add_rows"))
    }

    /// Elementwise minimum; the gradient goes to the smaller input (`self` on ties).
    pub fn min_combine(self, other: Var<'t>) -> R<'t> {
        self.same_tape(&other);
        let v = {
            let (a, b) = (self.value(), other.value());
            if a.shape() != b.shape() {
                return Err(AdError::ShapeMismatch { op: "min_combine", a: a.shape(), b: b.shape() });
            }
            a.zip(&b, |x, y| if y < x { y } else { x })
        };
        Ok(self.emit(v, Op::MinCombine(self.id, other.id), &[self.id, other.id], "min_combine"))
    }

    /// One-hot at `index` in the forward pass; identity in the backward pass.
    pub fn one_hot_st(self, index: usize) -> R<'t> {
        let v = {
            let x = self.value();
            if index >= x.len() {
                return Err(AdError::IndexOutOfRange { index, len: x.len() });
            }
            let mut out = Tensor::zeros(x.rows, x.cols);
            out.data[index] = 1.0;
            out
        };
        Ok(self.emit(v, Op::StraightThrough(self.id), &[self.id], "one_hot_st"))
    }

    /// One-hot at the argmax (lowest index on ties), straight-through backward.
    pub fn one_hot_argmax_st(self) -> Var<'t> {
        let idx = argmax(&self.value().data);
        self.one_hot_st(idx).expect("argmax index is in range")
    }
}

pub(crate) fn col_sums(x: &Tensor) -> Tensor {
    let mut out = vec![0.0; x.cols];
    for chunk in x.data.chunks(x.cols.max(1)) {
        for (o, v) in out.iter_mut().zip(chunk) {
            *o += v;
        }
    }
    Tensor::new(1, x.cols, out)
}
