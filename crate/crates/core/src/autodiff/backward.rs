use super::ops::{col_sums, sigmoid};
use super::{AdError, Node, Op, Tape, Tensor, Var};

/// Gradients of a scalar with respect to every node that required one.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var<'_>) -> Option<&Tensor> {
        self.grads.get(v.id()).and_then(Option::as_ref)
    }

    /// Gradient of `v`, zeros when nothing flowed into it.
    pub fn wrt(&self, v: Var<'_>) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => {
                let [r, c] = v.shape();
                Tensor::zeros(r, c)
            }
        }
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}

/// Reduces a broadcast gradient back to the input's shape.
fn unbroadcast(g: &Tensor, shape: [usize; 2]) -> Tensor {
    if g.shape() == shape {
        g.clone()
    } else {
        Tensor::scalar(g.sum())
    }
}

pub(super) fn backward(tape: &Tape, root: usize) -> Result<Gradients, AdError> {
    tape.status()?;
    let nodes = tape.nodes();
    let shape = nodes[root].value.shape();
    if shape != [1, 1] {
        return Err(AdError::NotScalar(shape));
    }
    let mut grads: Vec<Option<Tensor>> = vec![None; root + 1];
    grads[root] = Some(Tensor::scalar(1.0));
    for id in (0..=root).rev() {
        let Some(g) = grads[id].take() else { continue };
        let node = &nodes[id];
        if node.requires_grad {
            propagate(&nodes, node, &g, &mut grads);
        }
        grads[id] = Some(g);
    }
    // only report gradients for nodes that asked for them
    for (id, slot) in grads.iter_mut().enumerate() {
        if !nodes[id].requires_grad {
            *slot = None;
        }
    }
    Ok(Gradients { grads })
}

fn propagate(nodes: &[Node], node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
    let val = |i: usize| &nodes[i].value;
    let y = &node.value;
    let mut send = |i: usize, t: Tensor| {
        if nodes[i].requires_grad {
            accumulate(&mut grads[i], t);
        }
    };
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            send(*a, unbroadcast(g, val(*a).shape()));
            send(*b, unbroadcast(g, val(*b).shape()));
        }
        Op::Sub(a, b) => {
            send(*a, unbroadcast(g, val(*a).shape()));
            send(*b, unbroadcast(&g.map(|x| -x), val(*b).shape()));
        }
        Op::Mul(a, b) | Op::Div(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let is_div = matches!(node.op, Op::Div(..));
            let expand = |t: &Tensor| if t.is_scalar() { Tensor::filled(g.rows(), g.cols(), t.item()) } else { t.clone() };
            let (ae, be) = (expand(av), expand(bv));
            if nodes[*a].requires_grad {
                let ga = if is_div { g.zip(&be, |x, b| x / b) } else { g.zip(&be, |x, b| x * b) };
                send(*a, unbroadcast(&ga, av.shape()));
            }
            if nodes[*b].requires_grad {
                let gb = if is_div {
                    let t = g.zip(&ae, |x, a| x * a);
                    t.zip(&be, |x, b| -x / (b * b))
                } else {
                    g.zip(&ae, |x, a| x * a)
                };
                send(*b, unbroadcast(&gb, bv.shape()));
            }
        }
        Op::Neg(a) => send(*a, g.map(|x| -x)),
        Op::Scale(a, c) => send(*a, g.map(|x| x * c)),
        Op::AddScalar(a) => send(*a, g.clone()),
        Op::Exp(a) => send(*a, g.zip(y, |x, e| x * e)),
        Op::Ln(a) => send(*a, g.zip(val(*a), |x, v| x / v)),
        Op::Recip(a) => send(*a, g.zip(y, |x, r| -x * r * r)),
        Op::Sqrt(a) => send(*a, g.zip(y, |x, s| x / (2.0 * s))),
        Op::Square(a) => send(*a, g.zip(val(*a), |x, v| 2.0 * x * v)),
        Op::Softplus(a) => send(*a, g.zip(val(*a), |x, v| x * sigmoid(v))),
        Op::Sigmoid(a) => send(*a, g.zip(y, |x, s| x * s * (1.0 - s))),
        Op::Relu(a) => send(*a, g.zip(val(*a), |x, v| if v > 0.0 { x } else { 0.0 })),
        Op::MatMul(a, b) => {
            if nodes[*a].requires_grad {
                send(*a, g.matmul(&val(*b).transpose()));
            }
            if nodes[*b].requires_grad {
                send(*b, val(*a).transpose().matmul(g));
            }
        }
        Op::Transpose(a) => send(*a, g.transpose()),
        Op::Sum(a) => {
            let [r, c] = val(*a).shape();
            send(*a, Tensor::filled(r, c, g.item()));
        }
        Op::Mean(a) => {
            let [r, c] = val(*a).shape();
            send(*a, Tensor::filled(r, c, g.item() / (r * c) as f64));
        }
        Op::RowSums(a) => {
            let [r, c] = val(*a).shape();
            let data = (0..r * c).map(|k| g.data()[k / c.max(1)]).collect();
            send(*a, Tensor::new(r, c, data));
        }
        Op::ColSums(a) => {
            let [r, c] = val(*a).shape();
            let data = (0..r * c).map(|k| g.data()[k % c]).collect();
            send(*a, Tensor::new(r, c, data));
        }
        Op::AddRow(a, row) => {
            send(*a, g.clone());
            if nodes[*row].requires_grad {
                send(*row, col_sums(g));
            }
        }
        Op::MulRow(a, row) => {
            let (av, rv) = (val(*a), val(*row));
            let d = av.cols();
            if nodes[*a].requires_grad {
                let data = g.data().iter().enumerate().map(|(k, x)| x * rv.data()[k % d]).collect();
                send(*a, Tensor::new(av.rows(), d, data));
            }
            if nodes[*row].requires_grad {
                send(*row, col_sums(&g.zip(av, |x, v| x * v)));
            }
        }
        Op::MulCol(a, col) => {
            let (av, cv) = (val(*a), val(*col));
            let d = av.cols().max(1);
            if nodes[*a].requires_grad {
                let data = g.data().iter().enumerate().map(|(k, x)| x * cv.data()[k / d]).collect();
                send(*a, Tensor::new(av.rows(), av.cols(), data));
            }
            if nodes[*col].requires_grad {
                let prod = g.zip(av, |x, v| x * v);
                let data = prod.data().chunks(d).map(|r| r.iter().sum()).collect();
                send(*col, Tensor::new(av.rows(), 1, data));
            }
        }
        Op::LayerNorm(a, eps) => {
            let x = val(*a);
            let d = x.cols();
            let mut out = vec![0.0; x.len()];
            for r in 0..x.rows() {
                let xr = &x.data()[r * d..(r + 1) * d];
                let mean = xr.iter().sum::<f64>() / d as f64;
                let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                let inv = 1.0 / (var + eps).sqrt();
                let yr = &y.data()[r * d..(r + 1) * d];
                let gr = &g.data()[r * d..(r + 1) * d];
                let gm = gr.iter().sum::<f64>() / d as f64;
                let gym = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                for k in 0..d {
                    out[r * d + k] = inv * (gr[k] - gm - yr[k] * gym);
                }
            }
            send(*a, Tensor::new(x.rows(), d, out));
        }
        Op::RowSoftmax(a) => {
            let d = y.cols();
            let mut out = vec![0.0; y.len()];
            for r in 0..y.rows() {
                let yr = &y.data()[r * d..(r + 1) * d];
                let gr = &g.data()[r * d..(r + 1) * d];
                let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                for k in 0..d {
                    out[r * d + k] = yr[k] * (gr[k] - dot);
                }
            }
            send(*a, Tensor::new(y.rows(), d, out));
        }
        Op::ConcatCols(ids) => {
            let rows = y.rows();
            let mut offset = 0;
            for &i in ids {
                let c = val(i).cols();
                if nodes[i].requires_grad {
                    let mut data = Vec::with_capacity(rows * c);
                    for r in 0..rows {
                        let start = r * y.cols() + offset;
                        data.extend_from_slice(&g.data()[start..start + c]);
                    }
                    send(i, Tensor::new(rows, c, data));
                }
                offset += c;
            }
        }
        Op::GatherRows(a, idx) => {
            let x = val(*a);
            let d = x.cols();
            let mut out = Tensor::zeros(x.rows(), d);
            for (k, &i) in idx.iter().enumerate() {
                for c in 0..d {
                    out.data_mut()[i * d + c] += g.data()[k * d + c];
                }
            }
            send(*a, out);
        }
        Op::ScatterAddRows(a, idx) => {
            let d = y.cols();
            let mut data = Vec::with_capacity(idx.len() * d);
            for &i in idx {
                data.extend_from_slice(&g.data()[i * d..(i + 1) * d]);
            }
            send(*a, Tensor::new(idx.len(), d, data));
        }
        Op::MinCombine(a, b) => {
            let (av, bv) = (val(*a), val(*b));
            let ga = Tensor::new(
                g.rows(),
                g.cols(),
                (0..g.len()).map(|k| if bv.data()[k] < av.data()[k] { 0.0 } else { g.data()[k] }).collect(),
            );
            let gb = g.zip(&ga, |x, t| x - t);
            send(*a, ga);
            send(*b, gb);
        }
        Op::StraightThrough(a) => send(*a, g.clone()),
    }
}
