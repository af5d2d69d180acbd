//! Label-restricted SLIC over a domain of traversable cells.
//!
//! Distance between a cell and a cluster center is
//! `sqrt(d_label^2 + (d_xy / S)^2 * m^2)` with `d_label` zero for equal labels
//! and infinite otherwise, so clusters never mix labels. Fragments left
//! disconnected after clustering become regions of their own.

use crate::semantic_map::SemanticGrid;

const UNASSIGNED: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct Cluster {
    cx: f64,
    cy: f64,
    label: u8,
}

/// The global seed lattice: `nx * ny` blocks over the whole grid.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Lattice {
    pub spacing: f64,
    nx: usize,
    ny: usize,
}

impl Lattice {
    pub fn new(width: usize, height: usize, spacing: f64) -> Self {
        let nx = ((width as f64 / spacing).round() as usize).max(1);
        let ny = ((height as f64 / spacing).round() as usize).max(1);
        Self { spacing, nx, ny }
    }
}

/// Clusters the cells flagged in `domain` into label-pure, 4-connected regions.
/// Regions are ordered by their first cell in row-major order and each region's
/// cell list is sorted.
pub(crate) fn segment_domain(
    grid: &SemanticGrid,
    domain: &[bool],
    lattice: Lattice,
    compactness: f64,
    max_iters: usize,
) -> Vec<Vec<usize>> {
    let (w, h) = (grid.width(), grid.height());
    let s = lattice.spacing;
    let mut clusters = seed_clusters(grid, domain, lattice);

    let n = grid.len();
    let mut assign = vec![UNASSIGNED; n];
    let mut dist = vec![f64::INFINITY; n];
    let win = (2.0 * s).ceil() as isize;
    for _ in 0..max_iters.max(1) {
        let prev = assign.clone();
        assign.fill(UNASSIGNED);
        dist.fill(f64::INFINITY);
        for (k, cl) in clusters.iter().enumerate() {
            let c0 = cl.cx.floor() as isize;
            let r0 = cl.cy.floor() as isize;
            for r in (r0 - win).max(0)..=(r0 + win).min(h as isize - 1) {
                for c in (c0 - win).max(0)..=(c0 + win).min(w as isize - 1) {
                    let i = r as usize * w + c as usize;
                    if !domain[i] || grid.label_at_index(i) != cl.label {
                        continue;
                    }
                    let dx = c as f64 + 0.5 - cl.cx;
                    let dy = r as f64 + 0.5 - cl.cy;
                    let d = (dx * dx + dy * dy).sqrt() / s * compactness;
                    if d < dist[i] {
                        dist[i] = d;
                        assign[i] = k as u32;
                    }
                }
            }
        }
        let mut sums = vec![(0.0, 0.0, 0usize); clusters.len()];
        for (i, &k) in assign.iter().enumerate() {
            if k != UNASSIGNED {
                let e = &mut sums[k as usize];
                e.0 += (i % w) as f64 + 0.5;
                e.1 += (i / w) as f64 + 0.5;
                e.2 += 1;
            }
        }
        for (cl, (sx, sy, cnt)) in clusters.iter_mut().zip(sums) {
            if cnt > 0 {
                cl.cx = sx / cnt as f64;
                cl.cy = sy / cnt as f64;
            }
        }
        if assign == prev {
            break;
        }
    }
    connected_regions(grid, domain, &assign)
}

fn seed_clusters(grid: &SemanticGrid, domain: &[bool], lattice: Lattice) -> Vec<Cluster> {
    let (w, h) = (grid.width(), grid.height());
    let mut clusters = Vec::new();
    for by in 0..lattice.ny {
        let (y0, y1) = (by * h / lattice.ny, (by + 1) * h / lattice.ny);
        for bx in 0..lattice.nx {
            let (x0, x1) = (bx * w / lattice.nx, (bx + 1) * w / lattice.nx);
            let ccx = (x0 + x1) as f64 / 2.0;
            let ccy = (y0 + y1) as f64 / 2.0;
            // best cell per label: (distance, index)
            let mut best: Vec<Option<(f64, usize)>> = vec![None; grid.label_count()];
            for r in y0..y1 {
                for c in x0..x1 {
                    let i = r * w + c;
                    if !domain[i] {
                        continue;
                    }
                    let d = (c as f64 + 0.5 - ccx).hypot(r as f64 + 0.5 - ccy);
                    let slot = &mut best[grid.label_at_index(i) as usize];
                    if slot.is_none_or(|(bd, _)| d < bd) {
                        *slot = Some((d, i));
                    }
                }
            }
            for (label, slot) in best.iter().enumerate() {
                if let Some((_, i)) = slot {
                    clusters.push(Cluster {
                        cx: (i % w) as f64 + 0.5,
                        cy: (i / w) as f64 + 0.5,
                        label: label as u8,
                    });
                }
            }
        }
    }
    clusters
}

/// Splits assignments into 4-connected components. Unassigned domain cells are
/// grouped by label into components of their own.
fn connected_regions(grid: &SemanticGrid, domain: &[bool], assign: &[u32]) -> Vec<Vec<usize>> {
    let w = grid.width();
    let n = grid.len();
    let mut visited = vec![false; n];
    let mut regions = Vec::new();
    let mut stack = Vec::new();
    for seed in 0..n {
        if !domain[seed] || visited[seed] {
            continue;
        }
        let key = (assign[seed], grid.label_at_index(seed));
        let mut cells = Vec::new();
        visited[seed] = true;
        stack.push(seed);
        while let Some(i) = stack.pop() {
            cells.push(i);
            let (c, r) = (i % w, i / w);
            let mut visit = |j: usize| {
                if domain[j] && !visited[j] && (assign[j], grid.label_at_index(j)) == key {
                    visited[j] = true;
                    stack.push(j);
                }
            };
            if c + 1 < w {
                visit(i + 1);
            }
            if c > 0 {
                visit(i - 1);
            }
            if i + w < n {
                visit(i + w);
            }
            if r > 0 {
                visit(i - w);
            }
        }
        cells.sort_unstable();
        regions.push(cells);
    }
    regions
}
