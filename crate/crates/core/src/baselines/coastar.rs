use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{BaselineError, ClassOrder};
use crate::geom::{octile, Cell, Point};
use crate::search::step_neighbors;
use crate::semantic_map::SemanticGrid;

/// Lexicographic path cost: cells entered per class from the least preferred
/// class to the most preferred, then length in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassKey {
    pub counts: Vec<u32>,
    pub length: f64,
}

impl ClassKey {
    fn zero(classes: usize) -> Self {
        Self { counts: vec![0; classes], length: 0.0 }
    }
}

impl Eq for ClassKey {}

impl Ord for ClassKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.counts.cmp(&other.counts).then(self.length.total_cmp(&other.length))
    }
}

impl PartialOrd for ClassKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(PartialEq, Eq)]
struct Entry {
    f: ClassKey,
    idx: usize,
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.cmp(&self.f).then(other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Key of a cell path under `order`; the first cell is not counted.
pub fn class_key(grid: &SemanticGrid, order: &ClassOrder, cells: &[Cell]) -> Option<ClassKey> {
    let ranks = order.ranks(grid.label_count());
    let k = order.order.len();
    let mut key = ClassKey::zero(k);
    for w in cells.windows(2) {
        let rank = ranks[grid.label(w[1]) as usize]?;
        key.counts[k - 1 - rank] += 1;
        key.length += octile(w[0], w[1]) * grid.resolution();
    }
    Some(key)
}

/// A* minimizing [`ClassKey`] over 8-connected moves through cells whose label
/// appears in `order`. Returns the cells and their key.
pub fn coa_star(grid: &SemanticGrid, order: &ClassOrder, start: Point, goal: Point) -> Result<(Vec<Cell>, ClassKey), BaselineError> {
    let ranks = order.ranks(grid.label_count());
    let k = order.order.len();
    let (w, h) = (grid.width(), grid.height());
    let s = grid.cell_of(start).ok_or(BaselineError::NoPath)?;
    let t = grid.cell_of(goal).ok_or(BaselineError::NoPath)?;
    let passable = |i: usize| ranks[grid.label_at_index(i) as usize].is_some() && grid.class_at_index(i).is_traversable();
    let (si, ti) = (grid.index(s), grid.index(t));
    if !passable(si) || !passable(ti) {
        return Err(BaselineError::NoPath);
    }
    let heur = |i: usize| octile(grid.cell_at(i), t) * grid.resolution();
    let mut best: Vec<Option<ClassKey>> = vec![None; w * h];
    let mut parent = vec![usize::MAX; w * h];
    let mut closed = vec![false; w * h];
    let mut heap = BinaryHeap::new();
    best[si] = Some(ClassKey::zero(k));
    heap.push(Entry { f: ClassKey { counts: vec![0; k], length: heur(si) }, idx: si });
    while let Some(Entry { idx: u, .. }) = heap.pop() {
        if closed[u] {
            continue;
        }
        closed[u] = true;
        if u == ti {
            let mut cells = vec![t];
            let mut cur = u;
            while cur != si {
                cur = parent[cur];
                cells.push(grid.cell_at(cur));
            }
            cells.reverse();
            return Ok((cells, best[ti].clone().expect("goal was reached")));
        }
        let gu = best[u].clone().expect("popped cells have a key");
        for (v, len) in step_neighbors(w, h, passable, u) {
            if closed[v] {
                continue;
            }
            let rank = ranks[grid.label_at_index(v) as usize].expect("passable cells are ranked");
            let mut cand = gu.clone();
            cand.counts[k - 1 - rank] += 1;
            cand.length += len * grid.resolution();
            if best[v].as_ref().map_or(true, |b| cand < *b) {
                let f = ClassKey { counts: cand.counts.clone(), length: cand.length + heur(v) };
                best[v] = Some(cand);
                parent[v] = u;
                heap.push(Entry { f, idx: v });
            }
        }
    }
    Err(BaselineError::NoPath)
}
