//! Reference planners: D* Lite over demonstration-derived label costs,
//! class-ordered A* and rule-based constraint relaxation.

mod coastar;
mod dstar;
mod rcr;

pub use coastar::{class_key, coa_star, ClassKey};
pub use dstar::DStarLite;
pub use rcr::{rcr_plan, RcrParams, RcrResult};

use serde::{Deserialize, Serialize};

use crate::geom::{Cell, Point};
use crate::nav::{NavError, Plan, Planner, RegionCache};
use crate::semantic_map::{LabelInfo, RegionClass, RiskTable, SemanticGrid};
use crate::superpixel::{RegionGraph, Segmentation, SlicParams, DEFAULT_TAU};

/// Floor on label frequencies before taking reciprocals.
pub const FREQ_EPS: f64 = 1e-3;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BaselineError {
    #[error("no demonstrations")]
    EmptyDemos,
    #[error("no admissible path")]
    NoPath,
    #[error("expected {expected} labels, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

impl From<BaselineError> for NavError {
    fn from(_: BaselineError) -> Self {
        NavError::NoPath
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostDerivation {
    DemoFrequency,
    Manual,
}

/// Per-label traversal cost in `[0, 1]`; hard labels are infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelCostTable {
    pub costs: Vec<f64>,
    pub derivation: CostDerivation,
}

/// Traversable labels, most preferred first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassOrder {
    pub order: Vec<u8>,
}

impl ClassOrder {
    /// `rank[label]` with 0 the most preferred; hard labels get `None`.
    pub fn ranks(&self, label_count: usize) -> Vec<Option<usize>> {
        let mut r = vec![None; label_count];
        for (k, &l) in self.order.iter().enumerate() {
            if (l as usize) < label_count {
                r[l as usize] = Some(k);
            }
        }
        r
    }
}

/// Labels of the distinct superpixels a projected demonstration passes through.
pub fn traversed_labels(region_sequence: &[usize], graph: &RegionGraph) -> Vec<u8> {
    let mut ids = region_sequence.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter().map(|r| graph.nodes[r].label).collect()
}

/// Share of traversed superpixels carrying each label.
fn label_frequencies(traversals: &[Vec<u8>], labels: &[LabelInfo]) -> Result<Vec<f64>, BaselineError> {
    if traversals.is_empty() {
        return Err(BaselineError::EmptyDemos);
    }
    let mut counts = vec![0usize; labels.len()];
    for t in traversals {
        for &l in t {
            if (l as usize) >= labels.len() {
                return Err(BaselineError::LengthMismatch { expected: labels.len(), got: l as usize + 1 });
            }
            counts[l as usize] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(BaselineError::EmptyDemos);
    }
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// Label costs from the reciprocal of demonstration frequency, min-max scaled
/// over the traversed soft labels. Free labels cost 0, soft labels nobody
/// traversed cost 1, and a single traversed soft label also costs 1.
pub fn derive_costs(traversals: &[Vec<u8>], labels: &[LabelInfo]) -> Result<LabelCostTable, BaselineError> {
    let p = label_frequencies(traversals, labels)?;
    let raw: Vec<f64> = p.iter().map(|&q| 1.0 / q.max(FREQ_EPS)).collect();
    let seen: Vec<usize> = (0..labels.len()).filter(|&l| labels[l].class == RegionClass::Soft && p[l] > 0.0).collect();
    let lo = seen.iter().map(|&l| raw[l]).fold(f64::INFINITY, f64::min);
    let hi = seen.iter().map(|&l| raw[l]).fold(f64::NEG_INFINITY, f64::max);
    let costs = labels
        .iter()
        .enumerate()
        .map(|(l, info)| match info.class {
            RegionClass::Free => 0.0,
            RegionClass::Hard => f64::INFINITY,
            RegionClass::Soft if p[l] > 0.0 && hi > lo => (raw[l] - lo) / (hi - lo),
            RegionClass::Soft => 1.0,
        })
        .collect();
    Ok(LabelCostTable { costs, derivation: CostDerivation::DemoFrequency })
}

/// Traversable labels by demonstration frequency, most frequent first; ties go
/// to free labels, then to the lower label index.
pub fn derive_class_order(traversals: &[Vec<u8>], labels: &[LabelInfo]) -> Result<ClassOrder, BaselineError> {
    let p = label_frequencies(traversals, labels)?;
    let mut order: Vec<u8> = (0..labels.len() as u8).filter(|&l| labels[l as usize].class.is_traversable()).collect();
    order.sort_by(|&a, &b| {
        let (a, b) = (a as usize, b as usize);
        p[b].total_cmp(&p[a])
            .then((labels[a].class != RegionClass::Free).cmp(&(labels[b].class != RegionClass::Free)))
            .then(a.cmp(&b))
    });
    Ok(ClassOrder { order })
}

/// Per-cell penalties for `grid` from a label cost table.
pub fn cell_penalties(grid: &SemanticGrid, table: &LabelCostTable) -> Vec<f64> {
    (0..grid.len())
        .map(|i| {
            if grid.class_at_index(i) == RegionClass::Hard {
                f64::INFINITY
            } else {
                table.costs[grid.label_at_index(i) as usize]
            }
        })
        .collect()
}

/// Sorted ids of the soft superpixels containing any of `cells`.
pub fn traversed_soft_regions(grid: &SemanticGrid, seg: &Segmentation, cells: &[Cell]) -> Vec<usize> {
    let mut out: Vec<usize> = cells
        .iter()
        .filter(|&&c| grid.in_bounds(c) && grid.class(c) == RegionClass::Soft)
        .filter_map(|&c| seg.region_at(grid.index(c)))
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// D* Lite episode planner. The handle is created on the prior map and
/// repaired as belief cells change.
pub struct DStarPlanner {
    pub costs: LabelCostTable,
    handle: Option<(DStarLite, SemanticGrid)>,
}

impl DStarPlanner {
    pub fn new(costs: LabelCostTable) -> Self {
        Self { costs, handle: None }
    }

    pub fn expansions(&self) -> usize {
        self.handle.as_ref().map_or(0, |(h, _)| h.expansions())
    }
}

impl Planner for DStarPlanner {
    fn name(&self) -> &str {
        "dstar"
    }

    fn reset(&mut self, prior: &SemanticGrid, start: Point, goal: Point) -> Result<(), NavError> {
        let s = prior.cell_of(start).ok_or(NavError::NoPath)?;
        let t = prior.cell_of(goal).ok_or(NavError::NoPath)?;
        let pen = cell_penalties(prior, &self.costs);
        let h = DStarLite::new(prior.width(), prior.height(), prior.resolution(), pen, s, t);
        self.handle = Some((h, prior.clone()));
        Ok(())
    }

    fn plan(&mut self, belief: &SemanticGrid, from: Point, goal: Point) -> Result<Plan, NavError> {
        let (h, known) = self.handle.as_mut().ok_or(NavError::NotReset)?;
        if h.goal() != belief.cell_of(goal).ok_or(NavError::NoPath)? {
            return Err(NavError::NoPath);
        }
        let changed: Vec<(Cell, f64)> = known
            .changed_cells(belief)
            .into_iter()
            .map(|i| {
                let pen = if belief.class_at_index(i) == RegionClass::Hard {
                    f64::INFINITY
                } else {
                    self.costs.costs[belief.label_at_index(i) as usize]
                };
                (belief.cell_at(i), pen)
            })
            .collect();
        *known = belief.clone();
        h.move_start(belief.cell_of(from).ok_or(NavError::NoPath)?);
        h.update_cells(&changed);
        let cells = h.path()?;
        Ok(Plan::from_cells(belief, cells, from, goal))
    }
}

/// Class-ordered A* episode planner.
pub struct CoaStarPlanner {
    pub order: ClassOrder,
}

impl Planner for CoaStarPlanner {
    fn name(&self) -> &str {
        "coastar"
    }

    fn reset(&mut self, _prior: &SemanticGrid, _start: Point, _goal: Point) -> Result<(), NavError> {
        Ok(())
    }

    fn plan(&mut self, belief: &SemanticGrid, from: Point, goal: Point) -> Result<Plan, NavError> {
        let (cells, _) = coa_star(belief, &self.order, from, goal)?;
        Ok(Plan::from_cells(belief, cells, from, goal))
    }
}

/// Rule-based relaxation episode planner on the belief segmentation.
pub struct RcrPlanner {
    pub risk: RiskTable,
    pub params: RcrParams,
    pub slic: Option<SlicParams>,
    cache: Option<RegionCache>,
}

impl RcrPlanner {
    pub fn new(risk: RiskTable) -> Self {
        Self { risk, params: RcrParams::default(), slic: None, cache: None }
    }
}

impl Planner for RcrPlanner {
    fn name(&self) -> &str {
        "rcr"
    }

    fn explicit_relaxation(&self) -> bool {
        true
    }

    fn reset(&mut self, prior: &SemanticGrid, start: Point, goal: Point) -> Result<(), NavError> {
        self.cache = Some(RegionCache::new(prior, self.slic, DEFAULT_TAU, start, goal)?);
        Ok(())
    }

    fn plan(&mut self, belief: &SemanticGrid, from: Point, goal: Point) -> Result<Plan, NavError> {
        let cache = self.cache.as_mut().ok_or(NavError::NotReset)?;
        cache.refresh(belief)?;
        let r = rcr_plan(&cache.grid, &cache.seg, &self.risk, &self.params, from, goal)?;
        let mut plan = Plan::from_cells(belief, r.cells, from, goal);
        plan.relaxed = r.relaxed;
        Ok(plan)
    }
}

#[cfg(test)]
mod tests;
