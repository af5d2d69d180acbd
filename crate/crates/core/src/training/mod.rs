//! Learning relaxation costs from demonstrations through the differentiable
//! search.

mod dataset;
mod demo;

pub use dataset::{synth_dataset, DatasetSpec, SynthDataset};

pub use demo::{
    append_demo, default_oracle_costs, demo_to_line, load_demos, oracle_expert, project_demo, save_demos,
    DemoSource, Demonstration,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdError, Tape, Tensor, Var};
use crate::relax_gnn::{ModelError, RelaxModel};
use crate::search::{default_max_steps, diff_search_taped, SearchError, SearchResult};
use crate::semantic_map::{perturbed_grid, MapError, Scenario, SemanticGrid};
use crate::superpixel::{build_graph, slic_segment, RegionGraph, SegError, SlicParams, DEFAULT_TAU};

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("demonstration point ({x}, {y}) is not traversable")]
    PointOnHard { x: f64, y: f64 },
    #[error("no traversable route between start and goal")]
    NoPath,
    #[error("invalid loss config: {0}")]
    InvalidConfig(String),
    #[error("malformed demonstration file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Autodiff(#[from] AdError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Segmentation(#[from] SegError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub w_fp: f64,
    pub w_fn: f64,
    pub gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { w_fp: 0.3, w_fn: 0.7, gamma: 1.0 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.w_fp >= 0.0 && self.w_fn >= 0.0) {
            return Err(TrainError::InvalidConfig("weights must be non-negative".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(TrainError::InvalidConfig("gamma must be positive".into()));
        }
        Ok(())
    }
}

/// Weighted false positives and false negatives over `1 + |v*|`.
pub fn relax_loss(v: &[f64], v_star: &[f64], w_fp: f64, w_fn: f64) -> Result<f64, TrainError> {
    if v.len() != v_star.len() {
        return Err(TrainError::LengthMismatch { expected: v_star.len(), got: v.len() });
    }
    let fp: f64 = v.iter().zip(v_star).map(|(a, b)| a * (1.0 - b)).sum();
    let fn_: f64 = v.iter().zip(v_star).map(|(a, b)| (1.0 - a) * b).sum();
    let norm: f64 = v_star.iter().map(|x| x.abs()).sum();
    Ok((w_fp * fp + w_fn * fn_) / (1.0 + norm))
}

/// [`relax_loss`] on the tape, differentiable in `v` (a `1 x N` row).
pub fn relax_loss_var<'t>(v: Var<'t>, v_star: &[f64], w_fp: f64, w_fn: f64) -> Result<Var<'t>, TrainError> {
    if v.shape() != [1, v_star.len()] {
        return Err(TrainError::LengthMismatch { expected: v_star.len(), got: v.value().len() });
    }
    let tape = v.tape();
    let norm: f64 = v_star.iter().map(|x| x.abs()).sum();
    // w_fp·v·(1−v*) + w_fn·(1−v)·v*  =  v·(w_fp(1−v*) − w_fn v*) + w_fn·|v*|
    let coef: Vec<f64> = v_star.iter().map(|&s| w_fp * (1.0 - s) - w_fn * s).collect();
    let lin = v.mul(tape.constant(Tensor::row(coef)))?.sum();
    Ok(lin.add_scalar(w_fn * norm).scale(1.0 / (1.0 + norm)))
}

/// Per-sample weight `min(1, L(v, v*; 0.5, 0.5)^gamma)`.
pub fn sample_weight(v: &[f64], v_star: &[f64], gamma: f64) -> Result<f64, TrainError> {
    Ok(relax_loss(v, v_star, 0.5, 0.5)?.powf(gamma).min(1.0))
}

fn relaxed_mask(result: &SearchResult) -> Vec<f64> {
    result.relaxed.iter().map(|&r| f64::from(r)).collect()
}

/// Mean of `w_i · L_i` over the batch, evaluated on the hard relaxed sets.
pub fn batch_loss(batch: &[(SearchResult, Demonstration)], cfg: &LossConfig) -> Result<f64, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let mut total = 0.0;
    for (res, demo) in batch {
        let v = relaxed_mask(res);
        let l = relax_loss(&v, &demo.relaxed_truth, cfg.w_fp, cfg.w_fn)?;
        total += sample_weight(&v, &demo.relaxed_truth, cfg.gamma)? * l;
    }
    Ok(total / batch.len() as f64)
}

/// A projected demonstration on its region graph.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub graph: RegionGraph,
    pub demo: Demonstration,
}

/// Segments the (perturbed) map of `demo`, builds the scenario graph and
/// projects the demonstration onto it.
pub fn prepare_sample(
    grid: &SemanticGrid,
    scenario: &Scenario,
    demo: &Demonstration,
    slic: &SlicParams,
) -> Result<TrainSample, TrainError> {
    let base_seg = slic_segment(grid, slic)?;
    let world = perturbed_grid(grid, &base_seg, &scenario.perturbations, demo.perturbation_index)?;
    let seg = if demo.perturbation_index.is_some() { slic_segment(&world, slic)? } else { base_seg };
    let graph = build_graph(&world, &seg, scenario.start, scenario.goal, DEFAULT_TAU)?;
    let demo = project_demo(demo, &seg, &graph)?;
    Ok(TrainSample { graph, demo })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub clip_norm: f64,
    /// Search temperature during training, as a multiple of the mean edge weight.
    pub lambda_scale: f64,
    pub loss: LossConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-3,
            batch_size: 8,
            clip_norm: 5.0,
            lambda_scale: 1.0,
            loss: LossConfig::default(),
            seed: 0,
        }
    }
}

/// Result of one forward/backward pass on one sample.
#[derive(Debug, Clone)]
pub struct SampleEval {
    pub result: SearchResult,
    pub loss: f64,
    pub weight: f64,
    /// Gradient of `weight · loss` with respect to the flat parameters.
    pub grad: Vec<f64>,
}

/// Predicts costs, runs the taped search and differentiates the weighted loss.
pub fn evaluate_sample(model: &RelaxModel, sample: &TrainSample, cfg: &TrainConfig) -> Result<SampleEval, TrainError> {
    let g = &sample.graph;
    let (s, t) = match (g.start_node(), g.goal_node()) {
        (Some(s), Some(t)) => (s, t),
        _ => return Err(SearchError::MissingEndpoint("start or goal").into()),
    };
    let tape = Tape::new();
    let vars = model.bind(&tape, true);
    let psi = model.forward(&tape, &vars, g)?;
    if !psi.value().all_finite() {
        return Err(AdError::NonFiniteValue("relaxation costs").into());
    }
    let lambda = cfg.lambda_scale * g.mean_edge_weight().max(f64::MIN_POSITIVE);
    let search = diff_search_taped(&tape, g, s, t, psi, lambda, default_max_steps(g.len()))?;
    let v = search.st_closed.mask(&Tensor::row(g.soft_mask()))?;
    let truth = &sample.demo.relaxed_truth;
    let hard = relaxed_mask(&search.result);
    let weight = sample_weight(&hard, truth, cfg.loss.gamma)?;
    let loss_var = relax_loss_var(v, truth, cfg.loss.w_fp, cfg.loss.w_fn)?;
    let loss = loss_var.item();
    let grad = if weight > 0.0 {
        let grads = loss_var.scale(weight).backward()?;
        let blocks: Vec<Tensor> = vars.iter().map(|v| grads.wrt(*v)).collect();
        model.flatten_grads(&blocks)
    } else {
        vec![0.0; model.param_count()]
    };
    Ok(SampleEval { result: search.result, loss, weight, grad })
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grad[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            params[k] -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + self.eps);
        }
    }
}

/// Rescales `grad` so its Euclidean norm is at most `max_norm`.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Mini-batch training. Returns the trained model and the mean batch loss of
/// every epoch.
pub fn train(
    samples: &[TrainSample],
    model: &RelaxModel,
    cfg: &TrainConfig,
) -> Result<(RelaxModel, Vec<f64>), TrainError> {
    train_with(samples, model, cfg, |_, _| {})
}

/// [`train`] with a callback receiving `(epoch, loss)` after every epoch.
pub fn train_with(
    samples: &[TrainSample],
    model: &RelaxModel,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(RelaxModel, Vec<f64>), TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    cfg.loss.validate()?;
    if cfg.batch_size == 0 {
        return Err(TrainError::InvalidConfig("batch size must be positive".into()));
    }
    let mut model = model.clone();
    let mut opt = Adam::new(model.param_count(), cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let evals: Vec<SampleEval> = chunk
                .par_iter()
                .map(|&i| evaluate_sample(&model, &samples[i], cfg))
                .collect::<Result<_, _>>()
                .map_err(|e| match e {
                    TrainError::Autodiff(AdError::NonFiniteValue(_)) => TrainError::DivergedLoss { epoch },
                    other => other,
                })?;
            let b = evals.len() as f64;
            let mut grad = vec![0.0; model.param_count()];
            let mut loss = 0.0;
            for ev in &evals {
                loss += ev.weight * ev.loss / b;
                for (g, e) in grad.iter_mut().zip(&ev.grad) {
                    *g += e / b;
                }
            }
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::DivergedLoss { epoch });
            }
            clip_grad_norm(&mut grad, cfg.clip_norm);
            opt.step(model.params_mut(), &grad);
            epoch_loss += loss;
            batches += 1;
        }
        let mean = epoch_loss / batches as f64;
        history.push(mean);
        on_epoch(epoch, mean);
    }
    Ok((model, history))
}

/// Mean batch loss of `model` over `samples` without updating it.
pub fn dataset_loss(model: &RelaxModel, samples: &[TrainSample], cfg: &TrainConfig) -> Result<f64, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let evals: Vec<SampleEval> = samples
        .par_iter()
        .map(|s| evaluate_sample(model, s, cfg))
        .collect::<Result<_, _>>()?;
    Ok(evals.iter().map(|e| e.weight * e.loss).sum::<f64>() / evals.len() as f64)
}
