//! Evaluation metrics and benchmark sweeps.

mod bench;

pub use bench::{
    one_shot_iou, run_benchmark, scenario_truth, Aggregate, BenchConfig, EpisodeRow, MetricReport, PlannerSpec, REPORT_COLUMNS,
};

use crate::geom::{polyline_length, resample, Cell, Point};
use crate::nav::EpisodeLog;
use crate::search::grid_search;
use crate::semantic_map::{RegionClass, RiskTable, SemanticGrid};

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("start and goal coincide")]
    DegenerateEndpoints,
    #[error("empty polyline")]
    EmptyPolyline,
    #[error("region id {0} outside the segmentation")]
    SegmentationMismatch(usize),
    #[error("no feasible path between start and goal")]
    NoFeasibleShortest,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Discrete Fréchet distance between two point sequences.
pub fn discrete_frechet(a: &[Point], b: &[Point]) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptyPolyline);
    }
    let m = b.len();
    let mut prev = vec![0.0f64; m];
    let mut cur = vec![0.0f64; m];
    for (i, &p) in a.iter().enumerate() {
        for (j, &q) in b.iter().enumerate() {
            let d = p.dist(q);
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => cur[j - 1].max(d),
                (_, 0) => prev[0].max(d),
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]).max(d),
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

/// Discrete Fréchet distance of the polylines resampled at `step`, divided by
/// the start-goal distance.
pub fn frechet(a: &[Point], b: &[Point], start: Point, goal: Point, step: f64) -> Result<f64, MetricError> {
    let l = start.dist(goal);
    if !(l > 0.0) {
        return Err(MetricError::DegenerateEndpoints);
    }
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptyPolyline);
    }
    Ok(discrete_frechet(&resample(a, step), &resample(b, step))? / l)
}

/// Intersection over union of two region-id sets over a segmentation with
/// `n_regions` regions; 1 when both are empty.
pub fn relax_iou(pred: &[usize], truth: &[usize], n_regions: usize) -> Result<f64, MetricError> {
    let mut a = vec![false; n_regions];
    let mut b = vec![false; n_regions];
    for (set, mask) in [(pred, &mut a), (truth, &mut b)] {
        for &r in set {
            if r >= n_regions {
                return Err(MetricError::SegmentationMismatch(r));
            }
            mask[r] = true;
        }
    }
    let inter = a.iter().zip(&b).filter(|(x, y)| **x && **y).count();
    let union = a.iter().zip(&b).filter(|(x, y)| **x || **y).count();
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Cells a polyline passes through, consecutive repeats merged. Each segment
/// is split where it crosses grid lines and every piece of positive length
/// contributes the cell around its midpoint, so a segment touching a cell only
/// at a corner does not visit it.
pub fn trajectory_cells(grid: &SemanticGrid, path: &[Point]) -> Vec<Cell> {
    let mut out: Vec<Cell> = Vec::new();
    let mut push = |p: Point| {
        if let Some(c) = grid.cell_of(p) {
            if out.last() != Some(&c) {
                out.push(c);
            }
        }
    };
    if path.len() == 1 {
        push(path[0]);
    }
    let res = grid.resolution();
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.dist(b) == 0.0 {
            push(a);
            continue;
        }
        let mut ts = vec![0.0, 1.0];
        for (p, q) in [(a.x, b.x), (a.y, b.y)] {
            if p == q {
                continue;
            }
            let (lo, hi) = ((p.min(q) / res).floor() as i64, (p.max(q) / res).ceil() as i64);
            for k in lo..=hi {
                let t = (k as f64 * res - p) / (q - p);
                if t > 0.0 && t < 1.0 {
                    ts.push(t);
                }
            }
        }
        ts.sort_by(f64::total_cmp);
        for s in ts.windows(2) {
            if s[1] - s[0] > 1e-12 {
                push(a.lerp(b, 0.5 * (s[0] + s[1])));
            }
        }
    }
    out
}

/// Reached the goal without any trajectory cell being hard in `truth`.
pub fn success(log: &EpisodeLog, truth: &SemanticGrid) -> bool {
    log.reached && trajectory_cells(truth, &log.trajectory).iter().all(|&c| truth.class(c) != RegionClass::Hard)
}

/// Success weighted by path length.
pub fn spl(success: bool, executed_len: f64, shortest_len: f64) -> Result<f64, MetricError> {
    if !(shortest_len > 0.0) || !shortest_len.is_finite() {
        return Err(MetricError::NoFeasibleShortest);
    }
    if !success {
        return Ok(0.0);
    }
    Ok(shortest_len / executed_len.max(shortest_len))
}

/// Length of the shortest 8-connected route over free and soft cells, from the
/// exact start through cell centers to the exact goal.
pub fn shortest_feasible(truth: &SemanticGrid, start: Point, goal: Point) -> Result<f64, MetricError> {
    let s = truth.cell_of(start).ok_or(MetricError::NoFeasibleShortest)?;
    let t = truth.cell_of(goal).ok_or(MetricError::NoFeasibleShortest)?;
    let pen: Vec<f64> = (0..truth.len())
        .map(|i| if truth.class_at_index(i).is_traversable() { 0.0 } else { f64::INFINITY })
        .collect();
    let path = grid_search(truth.width(), truth.height(), truth.resolution(), &pen, s, t)
        .map_err(|_| MetricError::NoFeasibleShortest)?;
    let n = path.cells.len();
    let mut poly = vec![start];
    poly.extend(path.cells.iter().skip(1).take(n.saturating_sub(2)).map(|&c| truth.center(c)));
    poly.push(goal);
    Ok(polyline_length(&poly))
}

/// Sum of label risk over the cells visited by `path`, once per visit.
pub fn total_risk(path: &[Point], grid: &SemanticGrid, risk: &RiskTable) -> f64 {
    let per_label = risk.per_label(grid);
    trajectory_cells(grid, path).iter().map(|&c| per_label[grid.label(c) as usize]).sum()
}

#[cfg(test)]
mod tests;
