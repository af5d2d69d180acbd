use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::geom::{Cell, Point, MOVES4};
use crate::search::{grid_search, step_neighbors};
use crate::semantic_map::{RegionClass, RiskTable, SemanticGrid};
use crate::superpixel::Segmentation;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RcrParams {
    /// Weight of label risk in the region score.
    pub alpha: f64,
    /// Weight of normalized centroid-to-goal distance.
    pub beta: f64,
}

impl Default for RcrParams {
    fn default() -> Self {
        Self { alpha: 0.5, beta: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RcrResult {
    pub cells: Vec<Cell>,
    /// Relaxed regions, sorted.
    pub relaxed: Vec<usize>,
    /// Regions relaxed by the greedy loop, in order (endpoint regions excluded).
    pub order: Vec<usize>,
}

/// Score of a soft region: lower is relaxed first.
pub fn rcr_score(grid: &SemanticGrid, seg: &Segmentation, risk: &[f64], params: &RcrParams, region: usize, goal: Point) -> f64 {
    let label = seg.region_label(region) as usize;
    params.alpha * risk[label] + params.beta * seg.centroid(region).dist(goal) / grid.diagonal()
}

/// Cells reachable from `start` over allowed cells with the planner's move model.
fn reachable(grid: &SemanticGrid, allowed: &[bool], start: usize) -> Vec<bool> {
    let mut seen = vec![false; grid.len()];
    if !allowed[start] {
        return seen;
    }
    seen[start] = true;
    let mut stack = vec![start];
    while let Some(u) = stack.pop() {
        for (v, _) in step_neighbors(grid.width(), grid.height(), |i| allowed[i], u) {
            if !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

/// Soft regions not yet relaxed with a cell 4-adjacent to a reachable cell.
pub(crate) fn frontier(grid: &SemanticGrid, seg: &Segmentation, reach: &[bool], relaxed: &[bool]) -> Vec<usize> {
    let mut out = Vec::new();
    for i in (0..grid.len()).filter(|&i| reach[i]) {
        let c = grid.cell_at(i);
        for &(dc, dr) in &MOVES4 {
            let (x, y) = (c.col as isize + dc, c.row as isize + dr);
            if x < 0 || y < 0 || x as usize >= grid.width() || y as usize >= grid.height() {
                continue;
            }
            let j = grid.index(Cell::new(x as usize, y as usize));
            if let Some(r) = seg.region_at(j) {
                if !relaxed[r] && grid.class_at_index(j) == RegionClass::Soft {
                    out.push(r);
                }
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// Greedy rule-based relaxation. While the goal is unreachable over free cells
/// and relaxed regions, relaxes the lowest-scoring soft region bordering the
/// reachable set. Soft regions holding the endpoints are relaxed up front.
pub fn rcr_plan(
    grid: &SemanticGrid,
    seg: &Segmentation,
    risk: &RiskTable,
    params: &RcrParams,
    start: Point,
    goal: Point,
) -> Result<RcrResult, BaselineError> {
    let s = grid.cell_of(start).ok_or(BaselineError::NoPath)?;
    let t = grid.cell_of(goal).ok_or(BaselineError::NoPath)?;
    let (si, ti) = (grid.index(s), grid.index(t));
    if !grid.class_at_index(si).is_traversable() || !grid.class_at_index(ti).is_traversable() {
        return Err(BaselineError::NoPath);
    }
    let risk = risk.per_label(grid);
    let mut relaxed = vec![false; seg.n_regions()];
    let mut allowed: Vec<bool> = (0..grid.len()).map(|i| grid.class_at_index(i) == RegionClass::Free).collect();
    let relax = |r: usize, relaxed: &mut Vec<bool>, allowed: &mut Vec<bool>| {
        relaxed[r] = true;
        for &c in seg.region_cells(r) {
            allowed[c] = true;
        }
    };
    for i in [si, ti] {
        if grid.class_at_index(i) == RegionClass::Soft {
            if let Some(r) = seg.region_at(i) {
                relax(r, &mut relaxed, &mut allowed);
            }
        }
    }
    let mut order = Vec::new();
    loop {
        let reach = reachable(grid, &allowed, si);
        if reach[ti] {
            break;
        }
        let pick = frontier(grid, seg, &reach, &relaxed)
            .into_iter()
            .map(|r| (rcr_score(grid, seg, &risk, params, r, goal), r))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let Some((_, r)) = pick else {
            return Err(BaselineError::NoPath);
        };
        relax(r, &mut relaxed, &mut allowed);
        order.push(r);
    }
    let penalties: Vec<f64> = allowed.iter().map(|&a| if a { 0.0 } else { f64::INFINITY }).collect();
    let path = grid_search(grid.width(), grid.height(), grid.resolution(), &penalties, s, t).map_err(|_| BaselineError::NoPath)?;
    let relaxed_ids = (0..relaxed.len()).filter(|&r| relaxed[r]).collect();
    Ok(RcrResult { cells: path.cells, relaxed: relaxed_ids, order })
}
