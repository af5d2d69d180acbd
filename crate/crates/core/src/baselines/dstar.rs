use std::collections::BTreeSet;

use super::BaselineError;
use crate::geom::{octile, Cell};
use crate::search::{move_cost, step_neighbors};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
struct Key(f64, f64);

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.total_cmp(&other.1))
    }
}

/// Incremental shortest paths on an 8-connected grid of per-meter penalties
/// (`inf` = blocked). Searches backwards from the goal so the start can move.
#[derive(Debug, Clone)]
pub struct DStarLite {
    width: usize,
    height: usize,
    resolution: f64,
    penalties: Vec<f64>,
    g: Vec<f64>,
    rhs: Vec<f64>,
    queued: Vec<Option<Key>>,
    open: BTreeSet<(Key, usize)>,
    km: f64,
    start: usize,
    last: usize,
    goal: usize,
    expansions: usize,
}

impl DStarLite {
    pub fn new(width: usize, height: usize, resolution: f64, penalties: Vec<f64>, start: Cell, goal: Cell) -> Self {
        assert_eq!(penalties.len(), width * height);
        let n = width * height;
        let s = start.row * width + start.col;
        let t = goal.row * width + goal.col;
        let mut d = Self {
            width,
            height,
            resolution,
            penalties,
            g: vec![f64::INFINITY; n],
            rhs: vec![f64::INFINITY; n],
            queued: vec![None; n],
            open: BTreeSet::new(),
            km: 0.0,
            start: s,
            last: s,
            goal: t,
            expansions: 0,
        };
        if d.penalties[t].is_finite() {
            d.rhs[t] = 0.0;
            let k = d.key(t);
            d.push(t, k);
        }
        d
    }

    fn cell(&self, i: usize) -> Cell {
        Cell::new(i % self.width, i / self.width)
    }

    fn h(&self, a: usize, b: usize) -> f64 {
        octile(self.cell(a), self.cell(b)) * self.resolution
    }

    fn key(&self, u: usize) -> Key {
        let m = self.g[u].min(self.rhs[u]);
        Key(m + self.h(self.start, u) + self.km, m)
    }

    fn push(&mut self, u: usize, k: Key) {
        if let Some(old) = self.queued[u].take() {
            self.open.remove(&(old, u));
        }
        self.open.insert((k, u));
        self.queued[u] = Some(k);
    }

    fn remove(&mut self, u: usize) {
        if let Some(old) = self.queued[u].take() {
            self.open.remove(&(old, u));
        }
    }

    fn neighbors(&self, u: usize) -> Vec<(usize, f64)> {
        if !self.penalties[u].is_finite() {
            return Vec::new();
        }
        let pen = &self.penalties;
        step_neighbors(self.width, self.height, |i| pen[i].is_finite(), u)
            .map(|(v, len)| (v, move_cost(len * self.resolution, pen[u], pen[v])))
            .collect()
    }

    fn best_rhs(&self, u: usize) -> f64 {
        self.neighbors(u).into_iter().map(|(v, c)| c + self.g[v]).fold(f64::INFINITY, f64::min)
    }

    fn update_vertex(&mut self, u: usize) {
        if u != self.goal {
            self.rhs[u] = self.best_rhs(u);
        }
        if self.g[u] != self.rhs[u] {
            let k = self.key(u);
            self.push(u, k);
        } else {
            self.remove(u);
        }
    }

    /// Repairs the distance field until the start is locally consistent.
    pub fn compute(&mut self) {
        loop {
            let Some(&(k_old, u)) = self.open.first() else { break };
            let k_start = self.key(self.start);
            if k_old >= k_start && self.rhs[self.start] == self.g[self.start] {
                break;
            }
            self.expansions += 1;
            let k_new = self.key(u);
            if k_old < k_new {
                self.push(u, k_new);
            } else if self.g[u] > self.rhs[u] {
                self.g[u] = self.rhs[u];
                self.remove(u);
                for (s, c) in self.neighbors(u) {
                    if s != self.goal {
                        self.rhs[s] = self.rhs[s].min(c + self.g[u]);
                    }
                    if self.g[s] != self.rhs[s] {
                        let k = self.key(s);
                        self.push(s, k);
                    } else {
                        self.remove(s);
                    }
                }
            } else {
                self.g[u] = f64::INFINITY;
                self.update_vertex(u);
                for (s, _) in self.neighbors(u) {
                    self.update_vertex(s);
                }
            }
        }
    }

    /// Applies new penalties to cells. Every edge whose cost can change has
    /// both endpoints within one step of a changed cell.
    pub fn update_cells(&mut self, changes: &[(Cell, f64)]) {
        let mut touched = BTreeSet::new();
        for &(c, pen) in changes {
            let i = c.row * self.width + c.col;
            if self.penalties[i] == pen || (self.penalties[i].is_infinite() && pen.is_infinite()) {
                continue;
            }
            self.penalties[i] = pen;
            for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    let (x, y) = (c.col as isize + dc, c.row as isize + dr);
                    if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
                        touched.insert(y as usize * self.width + x as usize);
                    }
                }
            }
        }
        for u in touched {
            if !self.penalties[u].is_finite() {
                // blocked cells have no edges
                self.g[u] = f64::INFINITY;
                self.rhs[u] = if u == self.goal { 0.0 } else { f64::INFINITY };
                self.remove(u);
                continue;
            }
            if u == self.goal && self.rhs[u] != 0.0 {
                self.rhs[u] = 0.0;
            }
            self.update_vertex(u);
        }
    }

    /// Moves the start; later keys are offset so queued entries stay valid.
    pub fn move_start(&mut self, start: Cell) {
        let s = start.row * self.width + start.col;
        if s == self.start {
            return;
        }
        self.km += self.h(self.last, s);
        self.last = s;
        self.start = s;
    }

    /// Current shortest path from the start to the goal.
    pub fn path(&mut self) -> Result<Vec<Cell>, BaselineError> {
        self.compute();
        if !self.g[self.start].is_finite() || !self.penalties[self.start].is_finite() {
            return Err(BaselineError::NoPath);
        }
        let mut out = vec![self.cell(self.start)];
        let mut u = self.start;
        let limit = self.g.len();
        while u != self.goal {
            let (v, _) = self
                .neighbors(u)
                .into_iter()
                .map(|(v, c)| (v, c + self.g[v]))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .filter(|(_, c)| c.is_finite())
                .ok_or(BaselineError::NoPath)?;
            u = v;
            out.push(self.cell(u));
            if out.len() > limit {
                return Err(BaselineError::NoPath);
            }
        }
        Ok(out)
    }

    /// Cost of the current shortest path, after repairing.
    pub fn cost(&mut self) -> f64 {
        self.compute();
        self.g[self.start]
    }

    pub fn goal(&self) -> Cell {
        self.cell(self.goal)
    }

    pub fn start(&self) -> Cell {
        self.cell(self.start)
    }

    /// Vertex expansions since construction.
    pub fn expansions(&self) -> usize {
        self.expansions
    }
}
