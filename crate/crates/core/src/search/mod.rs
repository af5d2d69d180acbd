//! Graph A* with relaxation costs (exact and taped/differentiable variants) and
//! an 8-connected weighted grid planner.

mod grid;
mod taped;

pub use grid::{grid_astar, grid_search, move_cost, GridPath};
pub(crate) use grid::step_neighbors;
pub use taped::{diff_search_taped, TapedSearch};

use crate::superpixel::RegionGraph;

/// Cost assigned to nodes that have not been reached yet.
pub const UNREACHED: f64 = 1e18;

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum SearchError {
    #[error("open set is empty")]
    EmptyOpenSet,
    #[error("node {0} is not in the open set")]
    NodeNotOpen(usize),
    #[error("no path to the goal ({} nodes closed)", closed.iter().filter(|&&c| c).count())]
    NoPath { closed: Vec<bool> },
    #[error("step budget of {0} exceeded")]
    StepBudgetExceeded(usize),
    #[error("graph has no {0} node")]
    MissingEndpoint(&'static str),
    #[error("expected {expected} costs, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Autodiff(#[from] crate::autodiff::AdError),
}

/// Default temperature: a tenth of the mean edge weight.
pub fn default_lambda(graph: &RegionGraph) -> f64 {
    0.1 * graph.mean_edge_weight()
}

/// Default step budget for a graph of `n` nodes.
pub fn default_max_steps(n: usize) -> usize {
    4 * n.max(1)
}

/// Euclidean centroid distance to the goal node.
pub fn heuristic(graph: &RegionGraph) -> Vec<f64> {
    match graph.goal_node() {
        Some(t) => heuristic_to(graph, t),
        None => vec![0.0; graph.len()],
    }
}

pub fn heuristic_to(graph: &RegionGraph, goal: usize) -> Vec<f64> {
    let c = graph.nodes[goal].centroid;
    graph.nodes.iter().map(|n| n.centroid.dist(c)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchState {
    pub open: Vec<bool>,
    pub closed: Vec<bool>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub parent: Vec<Option<usize>>,
    pub lambda: f64,
}

impl SearchState {
    pub fn new(n: usize, origin: usize, h: Vec<f64>, lambda: f64) -> Self {
        let mut open = vec![false; n];
        open[origin] = true;
        let mut g = vec![UNREACHED; n];
        g[origin] = 0.0;
        Self { open, closed: vec![false; n], g, h, parent: vec![None; n], lambda }
    }

    pub fn n(&self) -> usize {
        self.g.len()
    }

    /// Normalized selection weights `exp(-(g_eff+h)/λ)` over the open set.
    pub fn soft_weights(&self, g_eff: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = (0..self.n()).map(|i| -(g_eff[i] + self.h[i]) / self.lambda).collect();
        let mx = (0..self.n())
            .filter(|&i| self.open[i])
            .map(|i| logits[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = (0..self.n())
            .map(|i| if self.open[i] { (logits[i] - mx).exp() } else { 0.0 })
            .collect();
        let z: f64 = w.iter().sum();
        if z > 0.0 {
            w.iter_mut().for_each(|x| *x /= z);
        }
        w
    }
}

/// Open node minimizing `g_eff + h`; ties go to the lowest id.
pub fn select_node(state: &SearchState, g_eff: &[f64]) -> Result<usize, SearchError> {
    let mut best: Option<(f64, usize)> = None;
    for i in 0..state.n() {
        if state.open[i] {
            let f = g_eff[i] + state.h[i];
            if best.is_none_or(|(bf, _)| f < bf) {
                best = Some((f, i));
            }
        }
    }
    best.map(|(_, i)| i).ok_or(SearchError::EmptyOpenSet)
}

/// Closes `sel` and relaxes its undiscovered neighbors with candidate cost
/// `g(sel) + psi(sel) + w(sel, j)`.
pub fn expand(state: &mut SearchState, sel: usize, graph: &RegionGraph, psi: &[f64]) -> Result<(), SearchError> {
    if !state.open[sel] {
        return Err(SearchError::NodeNotOpen(sel));
    }
    state.open[sel] = false;
    state.closed[sel] = true;
    let base = state.g[sel] + psi[sel];
    for &(j, w) in graph.neighbors(sel) {
        if state.closed[j] {
            continue;
        }
        let cand = base + w;
        if cand < state.g[j] {
            state.g[j] = cand;
            state.parent[j] = Some(sel);
            state.open[j] = true;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub path: Vec<usize>,
    pub cost: f64,
    pub closed: Vec<bool>,
    /// Closed soft nodes.
    pub relaxed: Vec<bool>,
    pub expansions: usize,
    pub success: bool,
}

impl SearchResult {
    pub fn relaxed_ids(&self) -> Vec<usize> {
        self.relaxed.iter().enumerate().filter(|(_, &r)| r).map(|(i, _)| i).collect()
    }
}

pub(crate) fn backtrack(parent: &[Option<usize>], goal: usize) -> Vec<usize> {
    let mut path = vec![goal];
    let mut cur = goal;
    while let Some(p) = parent[cur] {
        path.push(p);
        cur = p;
    }
    path.reverse();
    path
}

pub(crate) fn check_psi(graph: &RegionGraph, psi: &[f64]) -> Result<(), SearchError> {
    if psi.len() != graph.len() {
        return Err(SearchError::LengthMismatch { expected: graph.len(), got: psi.len() });
    }
    Ok(())
}

/// Hard-forward search between the graph's flagged start and goal nodes.
pub fn diff_search(graph: &RegionGraph, psi: &[f64], lambda: f64, max_steps: usize) -> Result<SearchResult, SearchError> {
    let s = graph.start_node().ok_or(SearchError::MissingEndpoint("start"))?;
    let t = graph.goal_node().ok_or(SearchError::MissingEndpoint("goal"))?;
    search_between(graph, s, t, psi, lambda, max_steps)
}

/// Search from `origin` to `goal` with relaxation costs `psi`. Path cost is the
/// sum of edge weights plus `psi` of every node on the path.
pub fn search_between(
    graph: &RegionGraph,
    origin: usize,
    goal: usize,
    psi: &[f64],
    lambda: f64,
    max_steps: usize,
) -> Result<SearchResult, SearchError> {
    check_psi(graph, psi)?;
    let n = graph.len();
    let h = heuristic_to(graph, goal);
    let mut state = SearchState::new(n, origin, h, lambda);
    let soft = graph.soft_mask();
    let mut g_ext = vec![0.0; n];
    for step in 0.. {
        if step >= max_steps {
            return Err(SearchError::StepBudgetExceeded(max_steps));
        }
        for i in 0..n {
            g_ext[i] = state.g[i] + psi[i];
        }
        let sel = match select_node(&state, &g_ext) {
            Ok(s) => s,
            Err(_) => return Err(SearchError::NoPath { closed: state.closed }),
        };
        if sel == goal {
            state.open[sel] = false;
            state.closed[sel] = true;
            let relaxed = state.closed.iter().zip(&soft).map(|(&c, &s)| c && s > 0.0).collect();
            return Ok(SearchResult {
                path: backtrack(&state.parent, goal),
                cost: g_ext[goal],
                closed: state.closed,
                relaxed,
                expansions: step + 1,
                success: true,
            });
        }
        expand(&mut state, sel, graph, psi)?;
    }
    unreachable!()
}
