use super::{cells_to_polyline, polyline_cells, Granularity, NavError, Plan, Planner};
use crate::geom::{Cell, Point, MOVES4};
use crate::relax_gnn::RelaxModel;
use crate::search::{default_lambda, default_max_steps, diff_search, grid_search};
use crate::semantic_map::{RegionClass, SemanticGrid};
use crate::superpixel::{build_graph, slic_segment, update_graph, RegionGraph, Segmentation, SlicParams, DEFAULT_TAU};

/// Learned relaxation planner: predicts region costs, searches the region graph
/// and turns the relaxed route into a grid path.
pub struct SurenavPlanner {
    model: RelaxModel,
    pub granularity: Granularity,
    /// Search temperature; `None` uses the graph default.
    pub lambda: Option<f64>,
    pub slic: Option<SlicParams>,
    pub tau: u32,
    cache: Option<RegionCache>,
    memo: Option<(Point, Point, Plan)>,
}

impl SurenavPlanner {
    pub fn new(model: RelaxModel) -> Self {
        Self {
            model,
            granularity: Granularity::default(),
            lambda: None,
            slic: None,
            tau: DEFAULT_TAU,
            cache: None,
            memo: None,
        }
    }

    pub fn with_granularity(mut self, g: Granularity) -> Self {
        self.granularity = g;
        self
    }

    pub fn model(&self) -> &RelaxModel {
        &self.model
    }

    /// Current belief segmentation and graph.
    pub fn segmentation(&self) -> Option<(&Segmentation, &RegionGraph)> {
        self.cache.as_ref().map(|c| (&c.seg, &c.graph))
    }
}

/// Segmentation and region graph of the current belief, updated incrementally
/// as the belief changes.
#[derive(Debug, Clone)]
pub struct RegionCache {
    pub grid: SemanticGrid,
    pub seg: Segmentation,
    pub graph: RegionGraph,
}

impl RegionCache {
    pub fn new(prior: &SemanticGrid, slic: Option<SlicParams>, tau: u32, start: Point, goal: Point) -> Result<Self, NavError> {
        let params = slic.unwrap_or_else(|| SlicParams::for_grid(prior));
        let seg = slic_segment(prior, &params)?;
        let graph = build_graph(prior, &seg, start, goal, tau)?;
        Ok(Self { grid: prior.clone(), seg, graph })
    }

    /// Brings the cache up to `belief`; returns whether anything changed.
    pub fn refresh(&mut self, belief: &SemanticGrid) -> Result<bool, NavError> {
        if self.grid == *belief {
            return Ok(false);
        }
        let (graph, seg) = update_graph(&self.graph, &self.seg, &self.grid, belief)?;
        self.graph = graph;
        self.seg = seg;
        self.grid = belief.clone();
        Ok(true)
    }
}

impl Planner for SurenavPlanner {
    fn name(&self) -> &str {
        "surenav"
    }

    fn explicit_relaxation(&self) -> bool {
        true
    }

    fn reset(&mut self, prior: &SemanticGrid, start: Point, goal: Point) -> Result<(), NavError> {
        self.cache = Some(RegionCache::new(prior, self.slic, self.tau, start, goal)?);
        self.memo = None;
        Ok(())
    }

    fn plan(&mut self, belief: &SemanticGrid, from: Point, goal: Point) -> Result<Plan, NavError> {
        let cache = self.cache.as_mut().ok_or(NavError::NotReset)?;
        if cache.refresh(belief)? {
            self.memo = None;
        }
        if let Some((f, t, plan)) = &self.memo {
            if *f == from && *t == goal {
                return Ok(plan.clone());
            }
        }
        let flagged = cache.graph.with_endpoints(&cache.seg, from, goal);
        let plan = plan_step(&self.model, &cache.grid, &cache.seg, &flagged, self.lambda, self.granularity)?;
        self.memo = Some((from, goal, plan.clone()));
        Ok(plan)
    }
}

/// One planning call on a graph whose start and goal nodes are flagged.
pub fn plan_step(
    model: &RelaxModel,
    grid: &SemanticGrid,
    seg: &Segmentation,
    graph: &RegionGraph,
    lambda: Option<f64>,
    granularity: Granularity,
) -> Result<Plan, NavError> {
    if graph.start_node().is_none() || graph.goal_node().is_none() {
        return Err(NavError::NoPath);
    }
    let psi = model.predict_costs(graph)?;
    let lambda = lambda.unwrap_or_else(|| default_lambda(graph));
    let result = diff_search(graph, &psi, lambda, default_max_steps(graph.len())).map_err(|_| NavError::NoPath)?;
    if !result.success {
        return Err(NavError::NoPath);
    }
    let mut relaxed: Vec<usize> =
        result.path.iter().copied().filter(|&r| graph.nodes[r].class == RegionClass::Soft).collect();
    relaxed.sort_unstable();
    relaxed.dedup();
    region_plan(grid, seg, graph, result.path, relaxed, granularity)
}

/// Turns a region path into an executable plan.
pub fn region_plan(
    grid: &SemanticGrid,
    seg: &Segmentation,
    graph: &RegionGraph,
    graph_path: Vec<usize>,
    relaxed: Vec<usize>,
    granularity: Granularity,
) -> Result<Plan, NavError> {
    let (from, goal) = (graph.start(), graph.goal());
    let (path, cells) = match granularity {
        Granularity::GraphPlan => {
            let mut poly = vec![from];
            let n = graph_path.len();
            poly.extend(graph_path.iter().skip(1).take(n.saturating_sub(2)).map(|&r| graph.nodes[r].centroid));
            poly.push(goal);
            let cells = polyline_cells(grid, &poly);
            (poly, cells)
        }
        Granularity::Portal => {
            let mut poly = vec![from];
            for w in graph_path.windows(2) {
                if let Some(p) = portal(grid, seg, w[0], w[1]) {
                    poly.push(p);
                }
            }
            poly.push(goal);
            let cells = polyline_cells(grid, &poly);
            (poly, cells)
        }
        Granularity::ContinuousWithin => {
            let mut on_path = vec![false; seg.n_regions()];
            for &r in &graph_path {
                on_path[r] = true;
            }
            let cells = cell_route(grid, from, goal, |i| seg.region_at(i).is_some_and(|r| on_path[r]))?;
            (cells_to_polyline(grid, &cells, from, goal), cells)
        }
        Granularity::ContinuousUnion => {
            let mut relaxed_mask = vec![false; seg.n_regions()];
            for &r in &relaxed {
                relaxed_mask[r] = true;
            }
            let cells = cell_route(grid, from, goal, |i| {
                grid.class_at_index(i) == RegionClass::Free || seg.region_at(i).is_some_and(|r| relaxed_mask[r])
            })?;
            (cells_to_polyline(grid, &cells, from, goal), cells)
        }
    };
    let transits = (1..cells.len())
        .filter(|&k| seg.region_at(grid.index(cells[k])) != seg.region_at(grid.index(cells[k - 1])))
        .collect();
    Ok(Plan { graph_path, relaxed, path, cells, transits, granularity: Some(granularity) })
}

/// Shortest 8-connected cell route over allowed cells. The endpoint cells are
/// always allowed.
fn cell_route(grid: &SemanticGrid, from: Point, goal: Point, allowed: impl Fn(usize) -> bool) -> Result<Vec<Cell>, NavError> {
    let s = grid.cell_of(from).ok_or(NavError::NoPath)?;
    let t = grid.cell_of(goal).ok_or(NavError::NoPath)?;
    let (si, ti) = (grid.index(s), grid.index(t));
    let penalties: Vec<f64> = (0..grid.len())
        .map(|i| {
            let ok = (i == si || i == ti || allowed(i)) && grid.class_at_index(i) != RegionClass::Hard;
            if ok {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let path = grid_search(grid.width(), grid.height(), grid.resolution(), &penalties, s, t).map_err(|_| NavError::NoPath)?;
    Ok(path.cells)
}

/// Point on the shared boundary of regions `a` and `b`: the boundary edge
/// midpoint closest to the mean of all boundary edge midpoints.
fn portal(grid: &SemanticGrid, seg: &Segmentation, a: usize, b: usize) -> Option<Point> {
    let mut mids = Vec::new();
    for &i in seg.region_cells(a) {
        let c = grid.cell_at(i);
        for &(dc, dr) in &MOVES4 {
            let (nc, nr) = (c.col as isize + dc, c.row as isize + dr);
            if nc < 0 || nr < 0 || nc as usize >= grid.width() || nr as usize >= grid.height() {
                continue;
            }
            let n = Cell::new(nc as usize, nr as usize);
            if seg.region_at(grid.index(n)) == Some(b) {
                mids.push(grid.center(c).lerp(grid.center(n), 0.5));
            }
        }
    }
    if mids.is_empty() {
        return None;
    }
    let k = mids.len() as f64;
    let mean = Point::new(mids.iter().map(|p| p.x).sum::<f64>() / k, mids.iter().map(|p| p.y).sum::<f64>() / k);
    mids.into_iter().min_by(|p, q| p.dist(mean).total_cmp(&q.dist(mean)))
}
