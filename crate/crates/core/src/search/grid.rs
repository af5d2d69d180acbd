use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::SearchError;
use crate::geom::{octile, Cell, Point, MOVES8};
use crate::semantic_map::SemanticGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct GridPath {
    pub cells: Vec<Cell>,
    /// Weighted cost in meters.
    pub cost: f64,
}

/// Cost of moving `len` meters between cells with per-meter penalties `ku`, `kv`.
pub fn move_cost(len: f64, ku: f64, kv: f64) -> f64 {
    len * (1.0 + 0.5 * (ku + kv))
}

#[derive(PartialEq)]
struct Entry {
    f: f64,
    g: f64,
    idx: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on f, then larger g, then lower index
        other
            .f
            .total_cmp(&self.f)
            .then(self.g.total_cmp(&other.g))
            .then(other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub(crate) fn step_neighbors(
    width: usize,
    height: usize,
    passable: impl Fn(usize) -> bool,
    idx: usize,
) -> impl Iterator<Item = (usize, f64)> {
    let (c, r) = ((idx % width) as isize, (idx / width) as isize);
    let inside = move |c: isize, r: isize| c >= 0 && r >= 0 && (c as usize) < width && (r as usize) < height;
    let mut out = [(usize::MAX, 0.0); 8];
    for (k, &(dc, dr)) in MOVES8.iter().enumerate() {
        let (nc, nr) = (c + dc, r + dr);
        if !inside(nc, nr) {
            continue;
        }
        let j = nr as usize * width + nc as usize;
        if !passable(j) {
            continue;
        }
        if dc != 0 && dr != 0 {
            // no corner cutting
            let a = r as usize * width + nc as usize;
            let b = nr as usize * width + c as usize;
            if !passable(a) || !passable(b) {
                continue;
            }
            out[k] = (j, std::f64::consts::SQRT_2);
        } else {
            out[k] = (j, 1.0);
        }
    }
    out.into_iter().filter(|&(j, _)| j != usize::MAX)
}

/// 8-connected weighted A* over a raster of per-meter penalties (`inf` = blocked).
pub fn grid_search(
    width: usize,
    height: usize,
    resolution: f64,
    penalties: &[f64],
    start: Cell,
    goal: Cell,
) -> Result<GridPath, SearchError> {
    assert_eq!(penalties.len(), width * height);
    let idx = |c: Cell| c.row * width + c.col;
    let (s, t) = (idx(start), idx(goal));
    let passable = |i: usize| penalties[i].is_finite();
    if !passable(s) || !passable(t) {
        return Err(SearchError::NoPath { closed: Vec::new() });
    }
    let h = |i: usize| octile(Cell::new(i % width, i / width), goal) * resolution;
    let mut g = vec![f64::INFINITY; width * height];
    let mut parent = vec![usize::MAX; width * height];
    let mut closed = vec![false; width * height];
    let mut heap = BinaryHeap::new();
    g[s] = 0.0;
    heap.push(Entry { f: h(s), g: 0.0, idx: s });
    while let Some(Entry { g: gu, idx: u, .. }) = heap.pop() {
        if closed[u] || gu > g[u] {
            continue;
        }
        closed[u] = true;
        if u == t {
            let mut cells = vec![goal];
            let mut cur = u;
            while cur != s {
                cur = parent[cur];
                cells.push(Cell::new(cur % width, cur / width));
            }
            cells.reverse();
            return Ok(GridPath { cells, cost: g[t] });
        }
        for (v, len) in step_neighbors(width, height, passable, u) {
            if closed[v] {
                continue;
            }
            let cand = gu + move_cost(len * resolution, penalties[u], penalties[v]);
            if cand < g[v] {
                g[v] = cand;
                parent[v] = u;
                heap.push(Entry { f: cand + h(v), g: cand, idx: v });
            }
        }
    }
    Err(SearchError::NoPath { closed: Vec::new() })
}

/// Shortest 8-connected path over cells satisfying `allowed`, as cell centers.
pub fn grid_astar(
    grid: &SemanticGrid,
    allowed: impl Fn(Cell) -> bool,
    start: Point,
    goal: Point,
) -> Result<Vec<Point>, SearchError> {
    let no_path = || SearchError::NoPath { closed: Vec::new() };
    let s = grid.cell_of(start).ok_or_else(no_path)?;
    let t = grid.cell_of(goal).ok_or_else(no_path)?;
    let penalties: Vec<f64> = (0..grid.len())
        .map(|i| if allowed(grid.cell_at(i)) { 0.0 } else { f64::INFINITY })
        .collect();
    let path = grid_search(grid.width(), grid.height(), grid.resolution(), &penalties, s, t)?;
    Ok(path.cells.into_iter().map(|c| grid.center(c)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::polyline_length;
    use crate::semantic_map::urban_labels;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Plain Dijkstra over the same move model.
    fn dijkstra(w: usize, h: usize, res: f64, pen: &[f64], s: usize, t: usize) -> Option<f64> {
        let mut dist = vec![f64::INFINITY; w * h];
        let mut done = vec![false; w * h];
        dist[s] = 0.0;
        loop {
            let u = (0..w * h).filter(|&i| !done[i] && dist[i].is_finite()).min_by(|&a, &b| dist[a].total_cmp(&dist[b]))?;
            if u == t {
                return Some(dist[t]);
            }
            done[u] = true;
            for (v, len) in step_neighbors(w, h, |i| pen[i].is_finite(), u) {
                let c = dist[u] + move_cost(len * res, pen[u], pen[v]);
                if c < dist[v] {
                    dist[v] = c;
                }
            }
        }
    }

    #[test]
    fn straight_corridor_gives_exact_length() {
        let g = SemanticGrid::filled(10, 1, 0.5, urban_labels(), 0).unwrap();
        let p = grid_astar(&g, |_| true, Point::new(0.25, 0.25), Point::new(4.75, 0.25)).unwrap();
        assert_eq!(p.len(), 10);
        assert!((polyline_length(&p) - 4.5).abs() < 1e-12);
    }

    #[test]
    fn blocked_goal_has_no_path() {
        let g = SemanticGrid::filled(5, 5, 1.0, urban_labels(), 0).unwrap();
        let goal = Cell::new(4, 4);
        let r = grid_astar(&g, |c| c != goal, Point::new(0.5, 0.5), g.center(goal));
        assert!(matches!(r, Err(SearchError::NoPath { .. })));
    }

    #[test]
    fn corners_are_not_cut() {
        // a diagonal gap between two blocked cells is impassable
        let pen = vec![0.0, f64::INFINITY, f64::INFINITY, 0.0];
        assert!(grid_search(2, 2, 1.0, &pen, Cell::new(0, 0), Cell::new(1, 1)).is_err());
    }

    #[test]
    fn random_mazes_match_dijkstra() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let (w, h) = (40, 40);
            let pen: Vec<f64> = (0..w * h)
                .map(|_| {
                    let u: f64 = rng.gen();
                    if u < 0.25 {
                        f64::INFINITY
                    } else if u < 0.5 {
                        rng.gen_range(0.0..3.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let free: Vec<usize> = (0..w * h).filter(|&i| pen[i].is_finite()).collect();
            let s = free[rng.gen_range(0..free.len())];
            let t = free[rng.gen_range(0..free.len())];
            let got = grid_search(w, h, 0.5, &pen, Cell::new(s % w, s / w), Cell::new(t % w, t / w));
            match (dijkstra(w, h, 0.5, &pen, s, t), got) {
                (Some(d), Ok(p)) => {
                    assert!((d - p.cost).abs() < 1e-9, "{d} vs {}", p.cost);
                    // path cost recomputed along the cells
                    let mut c = 0.0;
                    for win in p.cells.windows(2) {
                        let (a, b) = (win[0].row * w + win[0].col, win[1].row * w + win[1].col);
                        let len = if win[0].col != win[1].col && win[0].row != win[1].row { 2f64.sqrt() } else { 1.0 };
                        c += move_cost(len * 0.5, pen[a], pen[b]);
                    }
                    assert!((c - p.cost).abs() < 1e-9);
                }
                (None, Err(_)) => {}
                (d, p) => panic!("disagreement: {d:?} vs {p:?}"),
            }
        }
    }
}
