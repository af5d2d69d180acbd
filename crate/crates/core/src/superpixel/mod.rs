//! Superpixel segmentation of traversable space and the region-adjacency graph
//! built on top of it.

mod export;
mod graph;
mod slic;

pub use export::{GraphEdgeRecord, GraphFile, GraphNodeRecord, SegmentationFile};
pub use graph::{build_graph, build_graph_unanchored, update_graph, Edge, RegionGraph, RegionNode, DEFAULT_TAU};

use std::collections::BTreeMap;

use crate::geom::Point;
use crate::semantic_map::{RegionClass, SemanticGrid};
use slic::Lattice;

/// Assignment value of cells that belong to no superpixel (hard cells).
pub const NONE: u32 = u32::MAX;

/// Target mean superpixel area in square meters for the default granularity.
pub const DEFAULT_REGION_AREA_M2: f64 = 25.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SegError {
    #[error("the map has no traversable cells")]
    NoTraversableSpace,
    #[error("unknown region {0}")]
    UnknownRegion(usize),
    #[error("affinity requires two distinct regions")]
    SameRegion,
    #[error("start lies on a hard cell or outside the map")]
    StartOnHard,
    #[error("goal lies on a hard cell or outside the map")]
    GoalOnHard,
    #[error("grid dimensions do not match")]
    DimensionMismatch,
    #[error("path point ({x}, {y}) lies on a hard cell")]
    PointOnHard { x: f64, y: f64 },
    #[error("path point ({x}, {y}) lies outside the map")]
    PointOutOfBounds { x: f64, y: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SlicParams {
    pub target_n: usize,
    pub compactness: f64,
    pub max_iters: usize,
}

impl SlicParams {
    /// Parameters giving a mean superpixel area of about 25 m² on `grid`.
    pub fn for_grid(grid: &SemanticGrid) -> Self {
        Self::for_area(grid, DEFAULT_REGION_AREA_M2)
    }

    pub fn for_area(grid: &SemanticGrid, area_m2: f64) -> Self {
        let [free, soft, _] = grid.class_counts();
        let cell_area = grid.resolution() * grid.resolution();
        let traversable_m2 = (free + soft) as f64 * cell_area;
        Self {
            target_n: ((traversable_m2 / area_m2).round() as usize).max(1),
            compactness: 10.0,
            max_iters: 10,
        }
    }
}

/// Partition of the free and soft cells into label-pure, 4-connected superpixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    width: usize,
    height: usize,
    resolution: f64,
    assignment: Vec<u32>,
    region_cells: Vec<Vec<usize>>,
    region_labels: Vec<u8>,
    spacing: f64,
    compactness: f64,
    max_iters: usize,
}

/// Segments the traversable space of `grid` with label-restricted SLIC.
pub fn slic_segment(grid: &SemanticGrid, params: &SlicParams) -> Result<Segmentation, SegError> {
    if params.target_n == 0 {
        return Err(SegError::InvalidParam("target_n must be >= 1".into()));
    }
    if !(params.compactness > 0.0) {
        return Err(SegError::InvalidParam("compactness must be positive".into()));
    }
    let domain: Vec<bool> = (0..grid.len()).map(|i| grid.class_at_index(i).is_traversable()).collect();
    let traversable = domain.iter().filter(|&&d| d).count();
    if traversable == 0 {
        return Err(SegError::NoTraversableSpace);
    }
    let spacing = (traversable as f64 / params.target_n as f64).sqrt().max(1.0);
    let lattice = Lattice::new(grid.width(), grid.height(), spacing);
    let regions = slic::segment_domain(grid, &domain, lattice, params.compactness, params.max_iters);
    Ok(Segmentation::from_regions(grid, regions, spacing, params.compactness, params.max_iters))
}

impl Segmentation {
    pub(crate) fn from_regions(
        grid: &SemanticGrid,
        regions: Vec<Vec<usize>>,
        spacing: f64,
        compactness: f64,
        max_iters: usize,
    ) -> Self {
        let mut assignment = vec![NONE; grid.len()];
        let mut region_labels = Vec::with_capacity(regions.len());
        for (id, cells) in regions.iter().enumerate() {
            for &i in cells {
                assignment[i] = id as u32;
            }
            region_labels.push(grid.label_at_index(cells[0]));
        }
        Self {
            width: grid.width(),
            height: grid.height(),
            resolution: grid.resolution(),
            assignment,
            region_cells: regions,
            region_labels,
            spacing,
            compactness,
            max_iters,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn n_regions(&self) -> usize {
        self.region_cells.len()
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    /// Region of a cell index, `None` for hard cells.
    pub fn region_at(&self, index: usize) -> Option<usize> {
        let r = self.assignment[index];
        (r != NONE).then_some(r as usize)
    }

    pub fn region_of_point(&self, p: Point) -> Option<usize> {
        let idx = self.index_of_point(p)?;
        self.region_at(idx)
    }

    pub(crate) fn index_of_point(&self, p: Point) -> Option<usize> {
        if !(p.x >= 0.0 && p.y >= 0.0) {
            return None;
        }
        let col = (p.x / self.resolution).floor() as usize;
        let row = (p.y / self.resolution).floor() as usize;
        (col < self.width && row < self.height).then(|| row * self.width + col)
    }

    pub fn region_cells(&self, region: usize) -> &[usize] {
        &self.region_cells[region]
    }

    pub fn regions(&self) -> &[Vec<usize>] {
        &self.region_cells
    }

    pub fn region_label(&self, region: usize) -> u8 {
        self.region_labels[region]
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub(crate) fn lattice(&self) -> Lattice {
        Lattice::new(self.width, self.height, self.spacing)
    }

    pub(crate) fn slic_settings(&self) -> (f64, usize) {
        (self.compactness, self.max_iters)
    }

    pub fn matches(&self, grid: &SemanticGrid) -> bool {
        self.width == grid.width() && self.height == grid.height()
    }

    /// Metric centroid of a region (mean of its cell centers).
    pub fn centroid(&self, region: usize) -> Point {
        centroid_of(&self.region_cells[region], self.width, self.resolution)
    }

    /// Shared 4-neighbor boundary length between regions `i` and `j`, in cells.
    pub fn boundary_affinity(&self, i: usize, j: usize) -> Result<u32, SegError> {
        let n = self.n_regions();
        for r in [i, j] {
            if r >= n {
                return Err(SegError::UnknownRegion(r));
            }
        }
        if i == j {
            return Err(SegError::SameRegion);
        }
        let (w, h) = (self.width, self.height);
        let mut count = 0;
        for &c in &self.region_cells[i] {
            let (col, row) = (c % w, c / w);
            let mut check = |k: usize| {
                if self.assignment[k] == j as u32 {
                    count += 1;
                }
            };
            if col + 1 < w {
                check(c + 1);
            }
            if col > 0 {
                check(c - 1);
            }
            if row + 1 < h {
                check(c + w);
            }
            if row > 0 {
                check(c - w);
            }
        }
        Ok(count)
    }

    /// Boundary affinities of every touching region pair, keyed `(i, j)` with `i < j`.
    pub fn affinities(&self) -> BTreeMap<(usize, usize), u32> {
        let (w, h) = (self.width, self.height);
        let mut out = BTreeMap::new();
        let mut add = |a: u32, b: u32| {
            if a != NONE && b != NONE && a != b {
                let key = (a.min(b) as usize, a.max(b) as usize);
                *out.entry(key).or_insert(0) += 1;
            }
        };
        for row in 0..h {
            for col in 0..w {
                let i = row * w + col;
                if col + 1 < w {
                    add(self.assignment[i], self.assignment[i + 1]);
                }
                if row + 1 < h {
                    add(self.assignment[i], self.assignment[i + w]);
                }
            }
        }
        out
    }

    /// Regions reachable from `seed` within `hops` adjacency steps (including `seed`).
    pub fn regions_within_hops(&self, seed: usize, hops: u32) -> Vec<usize> {
        let adj = self.adjacency_lists();
        let mut depth = vec![u32::MAX; self.n_regions()];
        depth[seed] = 0;
        let mut frontier = vec![seed];
        let mut out = vec![seed];
        for d in 1..=hops {
            let mut next = Vec::new();
            for &r in &frontier {
                for &nb in &adj[r] {
                    if depth[nb] == u32::MAX {
                        depth[nb] = d;
                        next.push(nb);
                        out.push(nb);
                    }
                }
            }
            frontier = next;
        }
        out.sort_unstable();
        out
    }

    pub(crate) fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_regions()];
        for &(i, j) in self.affinities().keys() {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    /// Projects a polyline onto the sequence of regions it visits, collapsing
    /// consecutive repeats. Segments are sampled at a quarter cell.
    pub fn project_path(&self, path: &[Point]) -> Result<Vec<usize>, SegError> {
        let mut seq: Vec<usize> = Vec::new();
        let step = self.resolution / 4.0;
        let mut visit = |p: Point| -> Result<(), SegError> {
            let idx = self
                .index_of_point(p)
                .ok_or(SegError::PointOutOfBounds { x: p.x, y: p.y })?;
            let r = self.region_at(idx).ok_or(SegError::PointOnHard { x: p.x, y: p.y })?;
            if seq.last() != Some(&r) {
                seq.push(r);
            }
            Ok(())
        };
        let Some(&first) = path.first() else {
            return Ok(seq);
        };
        visit(first)?;
        for w in path.windows(2) {
            let len = w[0].dist(w[1]);
            let n = (len / step).ceil() as usize;
            for k in 1..=n {
                visit(w[0].lerp(w[1], k as f64 / n as f64))?;
            }
        }
        Ok(seq)
    }

    /// Checks the structural invariants: label purity, coverage of exactly the
    /// traversable cells, disjointness, and 4-connectivity of each region.
    pub fn validate(&self, grid: &SemanticGrid) -> Result<(), String> {
        if !self.matches(grid) {
            return Err("dimension mismatch".into());
        }
        for i in 0..grid.len() {
            let trav = grid.class_at_index(i).is_traversable();
            match (trav, self.region_at(i)) {
                (true, None) => return Err(format!("traversable cell {i} unassigned")),
                (false, Some(r)) => return Err(format!("hard cell {i} assigned to {r}")),
                _ => {}
            }
        }
        let w = self.width;
        for (r, cells) in self.region_cells.iter().enumerate() {
            if cells.is_empty() {
                return Err(format!("region {r} is empty"));
            }
            let label = grid.label_at_index(cells[0]);
            if cells.iter().any(|&c| grid.label_at_index(c) != label) {
                return Err(format!("region {r} mixes labels"));
            }
            if self.region_labels[r] != label {
                return Err(format!("region {r} has a stale label"));
            }
            if cells.iter().any(|&c| self.assignment[c] != r as u32) {
                return Err(format!("region {r} cell list disagrees with assignment"));
            }
            // connectivity via flood fill inside the region
            let mut seen = std::collections::HashSet::new();
            let mut stack = vec![cells[0]];
            seen.insert(cells[0]);
            while let Some(c) = stack.pop() {
                let (col, row) = (c % w, c / w);
                let mut nbrs = Vec::with_capacity(4);
                if col + 1 < w {
                    nbrs.push(c + 1);
                }
                if col > 0 {
                    nbrs.push(c - 1);
                }
                if row + 1 < self.height {
                    nbrs.push(c + w);
                }
                if row > 0 {
                    nbrs.push(c - w);
                }
                for nb in nbrs {
                    if self.assignment[nb] == r as u32 && seen.insert(nb) {
                        stack.push(nb);
                    }
                }
            }
            if seen.len() != cells.len() {
                return Err(format!("region {r} is not 4-connected"));
            }
        }
        let total: usize = self.region_cells.iter().map(Vec::len).sum();
        let [f, s, _] = grid.class_counts();
        if total != f + s {
            return Err("regions overlap or miss cells".into());
        }
        Ok(())
    }

    /// Region class of a region given the grid it was built on.
    pub fn region_class(&self, grid: &SemanticGrid, region: usize) -> RegionClass {
        grid.class_of_label(self.region_labels[region])
    }
}

pub(crate) fn centroid_of(cells: &[usize], width: usize, resolution: f64) -> Point {
    let (mut sx, mut sy) = (0.0, 0.0);
    for &c in cells {
        sx += (c % width) as f64 + 0.5;
        sy += (c / width) as f64 + 0.5;
    }
    let n = cells.len() as f64;
    Point::new(sx / n * resolution, sy / n * resolution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Cell;
    use crate::semantic_map::{urban_labels, SemanticGrid};

    fn uniform(w: usize, h: usize, label: u8) -> SemanticGrid {
        SemanticGrid::filled(w, h, 1.0, urban_labels(), label).unwrap()
    }

    #[test]
    fn uniform_square_splits_into_equal_quadrants() {
        let g = uniform(10, 10, 0);
        let seg = slic_segment(&g, &SlicParams { target_n: 4, compactness: 10.0, max_iters: 10 }).unwrap();
        assert_eq!(seg.n_regions(), 4);
        for r in 0..4 {
            assert_eq!(seg.region_cells(r).len(), 25);
        }
        seg.validate(&g).unwrap();
    }

    #[test]
    fn split_map_regions_never_straddle_labels() {
        let mut g = uniform(12, 9, 0);
        for row in 0..9 {
            for col in 6..12 {
                g.set_label(Cell::new(col, row), 5);
            }
        }
        for n in [1, 2, 3, 7, 20] {
            let seg = slic_segment(&g, &SlicParams { target_n: n, compactness: 10.0, max_iters: 10 }).unwrap();
            seg.validate(&g).unwrap();
        }
    }

    #[test]
    fn single_cell_map_has_one_region() {
        let g = uniform(1, 1, 0);
        let seg = slic_segment(&g, &SlicParams { target_n: 3, compactness: 10.0, max_iters: 10 }).unwrap();
        assert_eq!(seg.n_regions(), 1);
    }

    #[test]
    fn all_hard_map_is_rejected() {
        let g = uniform(4, 4, 7);
        assert_eq!(
            slic_segment(&g, &SlicParams::for_grid(&g)).unwrap_err(),
            SegError::NoTraversableSpace
        );
    }

    /// Two 2x2 blocks side by side inside a 4x2 grid.
    fn two_blocks() -> (SemanticGrid, Segmentation) {
        let mut g = uniform(4, 2, 0);
        for row in 0..2 {
            for col in 2..4 {
                g.set_label(Cell::new(col, row), 5);
            }
        }
        let seg = slic_segment(&g, &SlicParams { target_n: 2, compactness: 10.0, max_iters: 10 }).unwrap();
        (g, seg)
    }

    #[test]
    fn affinity_counts_shared_boundary_pairs() {
        let (_, seg) = two_blocks();
        assert_eq!(seg.n_regions(), 2);
        // pair-count oracle: cells (1,r)-(2,r) for r in 0..2
        assert_eq!(seg.boundary_affinity(0, 1).unwrap(), 2);
        assert_eq!(seg.boundary_affinity(1, 0).unwrap(), 2);
        assert_eq!(seg.affinities().get(&(0, 1)), Some(&2));
        assert_eq!(seg.boundary_affinity(0, 0), Err(SegError::SameRegion));
        assert_eq!(seg.boundary_affinity(0, 5), Err(SegError::UnknownRegion(5)));
    }

    #[test]
    fn non_touching_regions_have_zero_affinity() {
        let mut g = uniform(5, 1, 0);
        g.set_label(Cell::new(2, 0), 7);
        let seg = slic_segment(&g, &SlicParams { target_n: 1, compactness: 10.0, max_iters: 10 }).unwrap();
        let (left, right) = (seg.region_at(1).unwrap(), seg.region_at(3).unwrap());
        assert_ne!(left, right);
        assert_eq!(seg.boundary_affinity(left, right).unwrap(), 0);
    }

    #[test]
    fn projection_collapses_repeats_in_crossing_order() {
        let (g, seg) = two_blocks();
        let inside = [g.center(Cell::new(0, 0)), g.center(Cell::new(1, 1))];
        assert_eq!(seg.project_path(&inside).unwrap().len(), 1);
        let cross = [g.center(Cell::new(0, 0)), g.center(Cell::new(3, 0)), g.center(Cell::new(3, 1))];
        let left = seg.region_at(0).unwrap();
        let right = seg.region_at(3).unwrap();
        assert_eq!(seg.project_path(&cross).unwrap(), vec![left, right]);
    }

    #[test]
    fn projection_rejects_hard_and_outside_points() {
        let mut g = uniform(3, 1, 0);
        g.set_label(Cell::new(1, 0), 7);
        let seg = slic_segment(&g, &SlicParams::for_grid(&g)).unwrap();
        let p = [Point::new(0.5, 0.5), Point::new(2.5, 0.5)];
        assert!(matches!(seg.project_path(&p), Err(SegError::PointOnHard { .. })));
        let p = [Point::new(0.5, 0.5), Point::new(0.5, 1.5)];
        assert!(matches!(seg.project_path(&p), Err(SegError::PointOutOfBounds { .. })));
    }

    #[test]
    fn hops_expand_through_adjacency() {
        let g = uniform(15, 15, 0);
        let seg = slic_segment(&g, &SlicParams { target_n: 9, compactness: 10.0, max_iters: 10 }).unwrap();
        assert_eq!(seg.n_regions(), 9);
        let center = seg.region_at(7 * 15 + 7).unwrap();
        assert_eq!(seg.regions_within_hops(center, 0), vec![center]);
        assert_eq!(seg.regions_within_hops(center, 1).len(), 5);
    }
}
