//! Relaxation-cost estimator: a stack of hybrid graph layers (gated message
//! passing plus global attention) over the region graph, with a softplus head
//! masked to soft regions.

mod checkpoint;

pub use checkpoint::{load_model, save_model, Checkpoint, CHECKPOINT_VERSION};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdError, Tape, Tensor, Var};
use crate::superpixel::RegionGraph;

const LN_EPS: f64 = 1e-5;
const GATE_EPS: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("model expects {expected} labels, graph has {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Autodiff(#[from] AdError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Size of the label table (one-hot width).
    pub labels: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    /// Multiplier on the softplus output.
    pub cost_scale: f64,
}

impl ModelConfig {
    pub fn new(labels: usize) -> Self {
        Self { labels, hidden: 64, layers: 3, heads: 4, cost_scale: 1.0 }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.labels == 0 {
            return bad("label count must be positive");
        }
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return bad("hidden width must be a positive multiple of the head count");
        }
        if !(self.cost_scale.is_finite() && self.cost_scale > 0.0) {
            return bad("cost scale must be positive");
        }
        Ok(())
    }

    fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    fn per_layer(&self) -> usize {
        10 + 6 * self.heads + 2 + 4
    }
}

/// A named `rows x cols` block of the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSlice {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamSlice {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn is_bias(&self) -> bool {
        self.name.rsplit('.').next().is_some_and(|last| last.starts_with('b'))
    }
}

/// Parameter blocks in the order the forward pass consumes them.
pub fn param_layout(cfg: &ModelConfig) -> Vec<ParamSlice> {
    let d = cfg.hidden;
    let dh = cfg.head_dim();
    let mut shapes: Vec<(String, usize, usize)> = vec![
        ("node_enc.w".into(), cfg.labels + 2, d),
        ("node_enc.b".into(), 1, d),
        ("edge_enc.w".into(), 1, d),
        ("edge_enc.b".into(), 1, d),
    ];
    for l in 0..cfg.layers {
        for g in ["a", "b", "c", "d", "e"] {
            shapes.push((format!("layer{l}.gate.{g}.w"), d, d));
            shapes.push((format!("layer{l}.gate.{g}.b"), 1, d));
        }
        for h in 0..cfg.heads {
            for p in ["q", "k", "v"] {
                shapes.push((format!("layer{l}.attn{h}.{p}.w"), d, dh));
                shapes.push((format!("layer{l}.attn{h}.{p}.b"), 1, dh));
            }
        }
        shapes.push((format!("layer{l}.attn.o.w"), d, d));
        shapes.push((format!("layer{l}.attn.o.b"), 1, d));
        shapes.push((format!("layer{l}.ffn.w1"), d, 2 * d));
        shapes.push((format!("layer{l}.ffn.b1"), 1, 2 * d));
        shapes.push((format!("layer{l}.ffn.w2"), 2 * d, d));
        shapes.push((format!("layer{l}.ffn.b2"), 1, d));
    }
    shapes.push(("head.w1".into(), d, d));
    shapes.push(("head.b1".into(), 1, d));
    shapes.push(("head.w2".into(), d, 1));
    shapes.push(("head.b2".into(), 1, 1));

    let mut offset = 0;
    shapes
        .into_iter()
        .map(|(name, rows, cols)| {
            let s = ParamSlice { name, rows, cols, offset };
            offset += rows * cols;
            s
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxModel {
    config: ModelConfig,
    layout: Vec<ParamSlice>,
    params: Vec<f64>,
}

impl RelaxModel {
    /// Xavier-uniform weights, zero biases.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = param_layout(&config);
        let total = layout.last().map_or(0, |s| s.offset + s.len());
        let mut params = vec![0.0; total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in &layout {
            if s.is_bias() {
                continue;
            }
            let bound = (6.0 / (s.rows + s.cols) as f64).sqrt();
            for p in &mut params[s.offset..s.offset + s.len()] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(Self { config, layout, params })
    }

    pub(crate) fn from_parts(config: ModelConfig, params: Vec<f64>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = param_layout(&config);
        let total = layout.last().map_or(0, |s| s.offset + s.len());
        if params.len() != total {
            return Err(ModelError::InvalidConfig(format!("expected {total} parameters, got {}", params.len())));
        }
        Ok(Self { config, layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &[ParamSlice] {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Puts every parameter block on `tape`, as trainable leaves or constants.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> Vec<Var<'t>> {
        self.layout
            .iter()
            .map(|s| {
                let t = Tensor::new(s.rows, s.cols, self.params[s.offset..s.offset + s.len()].to_vec());
                if trainable {
                    tape.param(t)
                } else {
                    tape.constant(t)
                }
            })
            .collect()
    }

    /// Relaxation costs as a `1 x N` row.
    pub fn forward<'t>(&self, tape: &'t Tape, vars: &[Var<'t>], graph: &RegionGraph) -> Result<Var<'t>, ModelError> {
        let cfg = &self.config;
        let topo = Topology::new(graph);
        let (mut h, mut e) = encode(tape, &vars[..4], cfg, graph)?;
        let per = cfg.per_layer();
        for l in 0..cfg.layers {
            let lv = &vars[4 + l * per..4 + (l + 1) * per];
            (h, e) = gps_layer(lv, cfg, h, e, &topo)?;
        }
        let hv = &vars[4 + cfg.layers * per..];
        let z = h.matmul(hv[0])?.add_row(hv[1])?.relu().matmul(hv[2])?.add_row(hv[3])?;
        let soft = Tensor::new(graph.len(), 1, graph.soft_mask());
        let psi = z.softplus().scale(cfg.cost_scale).mask(&soft)?;
        Ok(psi.t())
    }

    /// Inference without gradient tracking.
    pub fn predict_costs(&self, graph: &RegionGraph) -> Result<Vec<f64>, ModelError> {
        let tape = Tape::new();
        let vars = self.bind(&tape, false);
        let psi = self.forward(&tape, &vars, graph)?;
        let out = psi.to_tensor().into_data();
        Ok(out)
    }

    /// Flattens per-block gradients (in layout order) into one vector.
    pub fn flatten_grads(&self, blocks: &[Tensor]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.params.len());
        for (s, g) in self.layout.iter().zip(blocks) {
            debug_assert_eq!(g.shape(), [s.rows, s.cols]);
            out.extend_from_slice(g.data());
        }
        out
    }
}

/// Directed message topology: every undirected edge appears in both directions.
#[derive(Debug, Clone)]
pub struct Topology {
    pub n: usize,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    /// Undirected edge index of each directed edge.
    pub edge_of: Vec<usize>,
    pub n_edges: usize,
}

impl Topology {
    pub fn new(graph: &RegionGraph) -> Self {
        let m = graph.edges.len();
        let mut src = Vec::with_capacity(2 * m);
        let mut dst = Vec::with_capacity(2 * m);
        let mut edge_of = Vec::with_capacity(2 * m);
        for (u, e) in graph.edges.iter().enumerate() {
            src.extend([e.i, e.j]);
            dst.extend([e.j, e.i]);
            edge_of.extend([u, u]);
        }
        Self { n: graph.len(), src, dst, edge_of, n_edges: m }
    }
}

/// Node input: label one-hot, start flag, goal flag. Edge input: centroid
/// distance over the map diagonal. Both are mapped linearly to width `hidden`.
pub fn encode<'t>(
    tape: &'t Tape,
    vars: &[Var<'t>],
    cfg: &ModelConfig,
    graph: &RegionGraph,
) -> Result<(Var<'t>, Var<'t>), ModelError> {
    if graph.label_count() != cfg.labels {
        return Err(ModelError::DimMismatch { expected: cfg.labels, got: graph.label_count() });
    }
    let m = cfg.labels;
    let n = graph.len();
    let mut x = vec![0.0; n * (m + 2)];
    for (i, node) in graph.nodes.iter().enumerate() {
        let row = &mut x[i * (m + 2)..(i + 1) * (m + 2)];
        if (node.label as usize) < m {
            row[node.label as usize] = 1.0;
        }
        row[m] = f64::from(node.is_start);
        row[m + 1] = f64::from(node.is_goal);
    }
    let diag = graph.diagonal().max(f64::MIN_POSITIVE);
    let dist: Vec<f64> = graph.edges.iter().map(|e| e.weight / diag).collect();
    let x = tape.constant(Tensor::new(n, m + 2, x));
    let ex = tape.constant(Tensor::new(dist.len(), 1, dist));
    let h = x.matmul(vars[0])?.add_row(vars[1])?;
    let e = ex.matmul(vars[2])?.add_row(vars[3])?;
    Ok((h, e))
}

fn linear<'t>(x: Var<'t>, w: Var<'t>, b: Var<'t>) -> Result<Var<'t>, AdError> {
    x.matmul(w)?.add_row(b)
}

/// One hybrid layer. `vars` are the layer's blocks in layout order.
pub fn gps_layer<'t>(
    vars: &[Var<'t>],
    cfg: &ModelConfig,
    h: Var<'t>,
    e: Var<'t>,
    topo: &Topology,
) -> Result<(Var<'t>, Var<'t>), ModelError> {
    if vars.len() != cfg.per_layer() {
        return Err(ModelError::InvalidConfig(format!("layer needs {} blocks, got {}", cfg.per_layer(), vars.len())));
    }
    let [n, d] = h.shape();
    if n != topo.n || d != cfg.hidden || e.shape() != [topo.n_edges, cfg.hidden] {
        return Err(AdError::ShapeMismatch { op: "gps_layer", a: h.shape(), b: e.shape() }.into());
    }

    // gated message passing
    let ah = linear(h, vars[0], vars[1])?;
    let bh = linear(h, vars[2], vars[3])?;
    let ce = linear(e, vars[4], vars[5])?;
    let dh = linear(h, vars[6], vars[7])?;
    let eh = linear(h, vars[8], vars[9])?;
    let gate_pre = ce
        .gather_rows(&topo.edge_of)?
        .add(dh.gather_rows(&topo.dst)?)?
        .add(eh.gather_rows(&topo.src)?)?;
    let sigma = gate_pre.sigmoid();
    let num = sigma.mul(bh.gather_rows(&topo.src)?)?.scatter_add_rows(&topo.dst, n)?;
    let den = sigma.scatter_add_rows(&topo.dst, n)?.add_scalar(GATE_EPS);
    let mp = ah.add(num.div(den)?)?;
    let h_local = h.add(mp.layer_norm(LN_EPS).relu())?;
    let e_upd = gate_pre.scatter_add_rows(&topo.edge_of, topo.n_edges)?.scale(0.5);
    let e_next = e.add(e_upd.layer_norm(LN_EPS).relu())?;

    // global attention
    let base = 10;
    let dk = cfg.head_dim() as f64;
    let mut heads = Vec::with_capacity(cfg.heads);
    for k in 0..cfg.heads {
        let v = &vars[base + 6 * k..base + 6 * (k + 1)];
        let q = linear(h, v[0], v[1])?;
        let key = linear(h, v[2], v[3])?;
        let val = linear(h, v[4], v[5])?;
        let att = q.matmul(key.t())?.scale(1.0 / dk.sqrt()).row_softmax();
        heads.push(att.matmul(val)?);
    }
    let o = base + 6 * cfg.heads;
    let attn = linear(Var::concat_cols(&heads)?, vars[o], vars[o + 1])?;
    let h_attn = h.add(attn)?.layer_norm(LN_EPS);

    // combine
    let s = h_local.add(h_attn)?;
    let f = o + 2;
    let ffn = linear(linear(s, vars[f], vars[f + 1])?.relu(), vars[f + 2], vars[f + 3])?;
    let h_next = s.add(ffn)?.layer_norm(LN_EPS);
    Ok((h_next, e_next))
}
