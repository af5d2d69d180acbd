use std::collections::BTreeMap;

use super::{slic, SegError, Segmentation, NONE};
use crate::geom::Point;
use crate::semantic_map::{RegionClass, SemanticGrid};

/// Default affinity threshold: any shared boundary makes two regions adjacent.
pub const DEFAULT_TAU: u32 = 1;

/// Smallest edge weight, for coincident centroids.
const MIN_WEIGHT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RegionNode {
    pub id: usize,
    pub centroid: Point,
    pub label: u8,
    pub class: RegionClass,
    pub is_start: bool,
    pub is_goal: bool,
    pub cell_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
    pub affinity: u32,
}

/// Undirected region-adjacency graph. Edges are stored once with `i < j`,
/// sorted; neighbor lists are sorted by neighbor id.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGraph {
    pub nodes: Vec<RegionNode>,
    pub edges: Vec<Edge>,
    neighbors: Vec<Vec<(usize, f64)>>,
    label_count: usize,
    start: Point,
    goal: Point,
    tau: u32,
    diagonal: f64,
}

impl RegionGraph {
    fn assemble(
        nodes: Vec<RegionNode>,
        mut edges: Vec<Edge>,
        label_count: usize,
        start: Point,
        goal: Point,
        tau: u32,
        diagonal: f64,
    ) -> Self {
        edges.sort_by_key(|e| (e.i, e.j));
        let mut neighbors = vec![Vec::new(); nodes.len()];
        for e in &edges {
            neighbors[e.i].push((e.j, e.weight));
            neighbors[e.j].push((e.i, e.weight));
        }
        for nb in &mut neighbors {
            nb.sort_by_key(|&(j, _)| j);
        }
        Self { nodes, edges, neighbors, label_count, start, goal, tau, diagonal }
    }

    /// Graph from explicit nodes and edges (`i != j`, any order). Node ids must
    /// equal their positions.
    pub fn from_parts(
        nodes: Vec<RegionNode>,
        edges: Vec<Edge>,
        label_count: usize,
        start: Point,
        goal: Point,
        diagonal: f64,
    ) -> Self {
        assert!(nodes.iter().enumerate().all(|(k, n)| n.id == k), "node ids must be positional");
        let edges = edges
            .into_iter()
            .map(|e| Edge { i: e.i.min(e.j), j: e.i.max(e.j), ..e })
            .collect();
        Self::assemble(nodes, edges, label_count, start, goal, DEFAULT_TAU, diagonal)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn start(&self) -> Point {
        self.start
    }

    pub fn goal(&self) -> Point {
        self.goal
    }

    pub fn tau(&self) -> u32 {
        self.tau
    }

    /// Diagonal of the map in meters, used to normalize distances.
    pub fn diagonal(&self) -> f64 {
        self.diagonal
    }

    pub fn start_node(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.is_start)
    }

    pub fn goal_node(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.is_goal)
    }

    /// Dense N×N binary adjacency, row-major.
    pub fn adjacency_matrix(&self) -> Vec<f64> {
        let n = self.len();
        let mut a = vec![0.0; n * n];
        for e in &self.edges {
            a[e.i * n + e.j] = 1.0;
            a[e.j * n + e.i] = 1.0;
        }
        a
    }

    /// Dense N×N weight matrix (zero where there is no edge), row-major.
    pub fn weight_matrix(&self) -> Vec<f64> {
        let n = self.len();
        let mut w = vec![0.0; n * n];
        for e in &self.edges {
            w[e.i * n + e.j] = e.weight;
            w[e.j * n + e.i] = e.weight;
        }
        w
    }

    pub fn soft_mask(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| f64::from(n.class == RegionClass::Soft)).collect()
    }

    pub fn mean_edge_weight(&self) -> f64 {
        if self.edges.is_empty() {
            1.0
        } else {
            self.edges.iter().map(|e| e.weight).sum::<f64>() / self.edges.len() as f64
        }
    }

    /// Copy of the graph with start/goal flags recomputed for new endpoints.
    /// Endpoints on hard cells leave no node flagged.
    pub fn with_endpoints(&self, seg: &Segmentation, start: Point, goal: Point) -> RegionGraph {
        let mut g = self.clone();
        g.start = start;
        g.goal = goal;
        let s = seg.region_of_point(start);
        let t = seg.region_of_point(goal);
        for n in &mut g.nodes {
            n.is_start = Some(n.id) == s;
            n.is_goal = Some(n.id) == t;
        }
        g
    }

    /// Edge relation keyed by centroid coordinates, for comparing graphs whose
    /// node ids differ.
    pub fn centroid_edge_set(&self) -> Vec<([u64; 2], [u64; 2])> {
        let key = |p: Point| [p.x.to_bits(), p.y.to_bits()];
        let mut out: Vec<_> = self
            .edges
            .iter()
            .map(|e| {
                let a = key(self.nodes[e.i].centroid);
                let b = key(self.nodes[e.j].centroid);
                if a <= b {
                    (a, b)
                } else {
                    (b, a)
                }
            })
            .collect();
        out.sort_unstable();
        out
    }
}

fn make_node(grid: &SemanticGrid, seg: &Segmentation, id: usize, start: Option<usize>, goal: Option<usize>) -> RegionNode {
    let label = seg.region_label(id);
    RegionNode {
        id,
        centroid: seg.centroid(id),
        label,
        class: grid.class_of_label(label),
        is_start: start == Some(id),
        is_goal: goal == Some(id),
        cell_count: seg.region_cells(id).len(),
    }
}

fn edges_from_affinities(
    nodes: &[RegionNode],
    affinities: &BTreeMap<(usize, usize), u32>,
    tau: u32,
) -> Vec<Edge> {
    affinities
        .iter()
        .filter(|&(_, &a)| a >= tau)
        .map(|(&(i, j), &a)| Edge {
            i,
            j,
            weight: nodes[i].centroid.dist(nodes[j].centroid).max(MIN_WEIGHT),
            affinity: a,
        })
        .collect()
}

/// Builds the region-adjacency graph: one node per superpixel, an edge wherever
/// the shared boundary is at least `tau` cells, weighted by centroid distance.
pub fn build_graph(
    grid: &SemanticGrid,
    seg: &Segmentation,
    start: Point,
    goal: Point,
    tau: u32,
) -> Result<RegionGraph, SegError> {
    if !seg.matches(grid) {
        return Err(SegError::DimensionMismatch);
    }
    let s = seg.region_of_point(start).ok_or(SegError::StartOnHard)?;
    let t = seg.region_of_point(goal).ok_or(SegError::GoalOnHard)?;
    let nodes: Vec<RegionNode> = (0..seg.n_regions())
        .map(|id| make_node(grid, seg, id, Some(s), Some(t)))
        .collect();
    let edges = edges_from_affinities(&nodes, &seg.affinities(), tau);
    Ok(RegionGraph::assemble(nodes, edges, grid.label_count(), start, goal, tau, grid.diagonal()))
}

/// [`build_graph`] without start or goal nodes, for inspecting a map's
/// adjacency structure.
pub fn build_graph_unanchored(grid: &SemanticGrid, seg: &Segmentation, tau: u32) -> Result<RegionGraph, SegError> {
    if !seg.matches(grid) {
        return Err(SegError::DimensionMismatch);
    }
    let nodes: Vec<RegionNode> = (0..seg.n_regions()).map(|id| make_node(grid, seg, id, None, None)).collect();
    let edges = edges_from_affinities(&nodes, &seg.affinities(), tau);
    let origin = Point::new(0.0, 0.0);
    Ok(RegionGraph::assemble(nodes, edges, grid.label_count(), origin, origin, tau, grid.diagonal()))
}

/// Incrementally updates a segmentation and graph after label changes.
///
/// Regions containing a changed cell are dissolved and their still-traversable
/// cells, together with newly traversable cells, are re-segmented with the same
/// lattice. Untouched regions keep their cells and centroids; their ids are kept
/// except when a removed region leaves a hole that the highest id is moved into.
/// Edges incident to re-segmented regions are recomputed.
pub fn update_graph(
    graph: &RegionGraph,
    seg: &Segmentation,
    old_grid: &SemanticGrid,
    new_grid: &SemanticGrid,
) -> Result<(RegionGraph, Segmentation), SegError> {
    if !old_grid.same_shape(new_grid) || !seg.matches(new_grid) {
        return Err(SegError::DimensionMismatch);
    }
    let changed = old_grid.changed_cells(new_grid);
    if changed.is_empty() {
        return Ok((graph.clone(), seg.clone()));
    }

    let n_old = seg.n_regions();
    let mut affected = vec![false; n_old];
    for &c in &changed {
        if let Some(r) = seg.region_at(c) {
            affected[r] = true;
        }
    }
    let mut domain = vec![false; new_grid.len()];
    for (r, cells) in seg.regions().iter().enumerate() {
        if affected[r] {
            for &c in cells {
                domain[c] = new_grid.class_at_index(c).is_traversable();
            }
        }
    }
    for &c in &changed {
        if seg.region_at(c).is_none() && new_grid.class_at_index(c).is_traversable() {
            domain[c] = true;
        }
    }
    let (compactness, max_iters) = seg.slic_settings();
    let fresh = slic::segment_domain(new_grid, &domain, seg.lattice(), compactness, max_iters);

    // Slot table: old id -> Some(cells) for kept regions, None for holes.
    let mut slots: Vec<Option<Vec<usize>>> = seg
        .regions()
        .iter()
        .enumerate()
        .map(|(r, cells)| (!affected[r]).then(|| cells.clone()))
        .collect();
    // kept[new_id] = Some(old_id) for regions carried over unchanged
    let mut origin: Vec<Option<usize>> = (0..n_old).map(|r| (!affected[r]).then_some(r)).collect();
    let mut fresh_iter = fresh.into_iter();
    for slot in 0..n_old {
        if slots[slot].is_none() {
            match fresh_iter.next() {
                Some(cells) => slots[slot] = Some(cells),
                None => break,
            }
        }
    }
    for cells in fresh_iter {
        slots.push(Some(cells));
        origin.push(None);
    }
    // Fill remaining holes by moving the highest id down.
    let mut hole = 0;
    loop {
        while hole < slots.len() && slots[hole].is_some() {
            hole += 1;
        }
        if hole >= slots.len() {
            break;
        }
        while slots.last().is_some_and(|s| s.is_none()) {
            slots.pop();
            origin.pop();
        }
        if hole >= slots.len() {
            break;
        }
        let moved = slots.pop().unwrap();
        let moved_origin = origin.pop().unwrap();
        slots[hole] = moved;
        origin[hole] = moved_origin;
    }
    let regions: Vec<Vec<usize>> = slots.into_iter().map(Option::unwrap).collect();
    let new_seg = Segmentation::from_regions(new_grid, regions, seg.spacing(), compactness, max_iters);

    let s = new_seg.region_of_point(graph.start());
    let t = new_seg.region_of_point(graph.goal());
    let n_new = new_seg.n_regions();
    let mut old_to_new = vec![None; n_old];
    let nodes: Vec<RegionNode> = (0..n_new)
        .map(|id| match origin[id] {
            Some(old) => {
                old_to_new[old] = Some(id);
                RegionNode {
                    id,
                    is_start: s == Some(id),
                    is_goal: t == Some(id),
                    ..graph.nodes[old].clone()
                }
            }
            None => make_node(new_grid, &new_seg, id, s, t),
        })
        .collect();

    // Edges between two carried-over regions are unchanged.
    let mut affinities: BTreeMap<(usize, usize), u32> = BTreeMap::new();
    let tau = graph.tau();
    let mut edges: Vec<Edge> = Vec::new();
    for e in &graph.edges {
        if let (Some(a), Some(b)) = (old_to_new[e.i], old_to_new[e.j]) {
            edges.push(Edge { i: a.min(b), j: a.max(b), ..*e });
        }
    }
    // Recount affinities for pairs involving a re-segmented region.
    let w = new_seg.width();
    let h = new_seg.height();
    let assign = new_seg.assignment();
    for id in (0..n_new).filter(|&id| origin[id].is_none()) {
        for &c in new_seg.region_cells(id) {
            let (col, row) = (c % w, c / w);
            let mut nbrs = [usize::MAX; 4];
            if col + 1 < w {
                nbrs[0] = c + 1;
            }
            if col > 0 {
                nbrs[1] = c - 1;
            }
            if row + 1 < h {
                nbrs[2] = c + w;
            }
            if row > 0 {
                nbrs[3] = c - w;
            }
            for nb in nbrs.into_iter().filter(|&nb| nb != usize::MAX) {
                let other = assign[nb];
                if other == NONE || other as usize == id {
                    continue;
                }
                let other = other as usize;
                // pairs of two fresh regions are seen from both sides; count once
                if origin[other].is_none() && nb < c {
                    continue;
                }
                *affinities.entry((id.min(other), id.max(other))).or_insert(0) += 1;
            }
        }
    }
    edges.extend(edges_from_affinities(&nodes, &affinities, tau));
    let graph = RegionGraph::assemble(
        nodes,
        edges,
        graph.label_count(),
        graph.start(),
        graph.goal(),
        tau,
        graph.diagonal(),
    );
    Ok((graph, new_seg))
}
