//! Interleaved observe / plan / execute navigation in a semi-static world.

mod surenav;

pub use surenav::{plan_step, region_plan, RegionCache, SurenavPlanner};

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom::{polyline_length, Cell, Point};
use crate::relax_gnn::ModelError;
use crate::search::SearchError;
use crate::semantic_map::{apply_perturbation, MapError, Perturbation, RegionClass, SemanticGrid};
use crate::superpixel::{SegError, Segmentation};

pub const DEFAULT_SENSING_RADIUS: f64 = 20.0;

#[derive(Debug, thiserror::Error)]
pub enum NavError {
    #[error("no admissible path")]
    NoPath,
    #[error("plan has no remaining steps")]
    PlanExhausted,
    #[error("planner was not reset for this episode")]
    NotReset,
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Segmentation(#[from] SegError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// Region centroid waypoints.
    GraphPlan,
    /// Shared-boundary midpoints between consecutive regions.
    Portal,
    /// Grid path restricted to the regions on the graph path.
    ContinuousWithin,
    /// Grid path over free cells plus relaxed regions.
    #[default]
    ContinuousUnion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    /// Region ids along the graph path (empty for grid planners).
    pub graph_path: Vec<usize>,
    /// Relaxed region ids, sorted.
    pub relaxed: Vec<usize>,
    pub path: Vec<Point>,
    /// Cells the agent steps through, starting with its own cell.
    #[serde(skip)]
    pub cells: Vec<Cell>,
    /// Indices into `cells` where the path enters a new region.
    #[serde(skip)]
    pub transits: Vec<usize>,
    pub granularity: Option<Granularity>,
}

impl Plan {
    /// Grid plan without region structure.
    pub fn from_cells(grid: &SemanticGrid, cells: Vec<Cell>, from: Point, goal: Point) -> Self {
        let path = cells_to_polyline(grid, &cells, from, goal);
        Self { graph_path: Vec::new(), relaxed: Vec::new(), path, cells, transits: Vec::new(), granularity: None }
    }
}

/// `[from, interior cell centers..., goal]`.
pub(crate) fn cells_to_polyline(grid: &SemanticGrid, cells: &[Cell], from: Point, goal: Point) -> Vec<Point> {
    let mut poly = vec![from];
    poly.extend(cells.iter().skip(1).take(cells.len().saturating_sub(2)).map(|&c| grid.center(c)));
    if cells.len() > 1 || from != goal {
        poly.push(goal);
    }
    poly
}

/// Cells visited by a polyline sampled at a quarter cell.
pub(crate) fn polyline_cells(grid: &SemanticGrid, poly: &[Point]) -> Vec<Cell> {
    let mut out: Vec<Cell> = Vec::new();
    let mut push = |p: Point| {
        if let Some(c) = grid.cell_of(p) {
            if out.last() != Some(&c) {
                out.push(c);
            }
        }
    };
    if let Some(&p) = poly.first() {
        push(p);
    }
    let step = grid.resolution() / 4.0;
    for w in poly.windows(2) {
        let n = (w[0].dist(w[1]) / step).ceil().max(1.0) as usize;
        for k in 1..=n {
            push(w[0].lerp(w[1], k as f64 / n as f64));
        }
    }
    out
}

pub trait Planner {
    fn name(&self) -> &str;

    /// Prepares for a new episode on the prior map.
    fn reset(&mut self, prior: &SemanticGrid, start: Point, goal: Point) -> Result<(), NavError>;

    /// Plans from `from` to `goal` on the current belief.
    fn plan(&mut self, belief: &SemanticGrid, from: Point, goal: Point) -> Result<Plan, NavError>;

    /// Whether [`Plan::relaxed`] is the planner's own relaxation set rather
    /// than something to infer from the cells it traverses.
    fn explicit_relaxation(&self) -> bool {
        false
    }
}

/// Ground truth, belief and the agent in a semi-static world.
#[derive(Debug, Clone)]
pub struct WorldSim {
    pub truth: SemanticGrid,
    pub belief: SemanticGrid,
    pub agent: Point,
    pub rho: f64,
    pub t: usize,
    /// `(step, perturbation)` pairs, applied to the truth once `t >= step`.
    pub events: Vec<(usize, Perturbation)>,
    applied: Vec<bool>,
    event_seg: Segmentation,
}

impl WorldSim {
    /// `event_seg` is the segmentation perturbation seeds refer to.
    pub fn new(
        prior: SemanticGrid,
        truth: SemanticGrid,
        events: Vec<(usize, Perturbation)>,
        event_seg: Segmentation,
        start: Point,
        rho: f64,
    ) -> Self {
        let applied = vec![false; events.len()];
        Self { belief: prior, truth, agent: start, rho, t: 0, events, applied, event_seg }
    }

    pub fn agent_cell(&self) -> Option<Cell> {
        self.truth.cell_of(self.agent)
    }

    /// Applies due events to the truth, then copies the truth into the belief
    /// within `rho` of the agent. Returns the number of belief cells changed.
    /// An event never relabels the cell the agent stands on.
    pub fn observe(&mut self) -> usize {
        let here = self.agent_cell();
        for k in 0..self.events.len() {
            if self.applied[k] || self.events[k].0 > self.t {
                continue;
            }
            self.applied[k] = true;
            if let Ok(next) = apply_perturbation(&self.truth, &self.event_seg, &self.events[k].1) {
                let keep = here.map(|c| self.truth.label(c));
                self.truth = next;
                if let (Some(c), Some(l)) = (here, keep) {
                    self.truth.set_label(c, l);
                }
            }
        }
        let Some(c0) = here else { return 0 };
        let reach = (self.rho / self.truth.resolution()).ceil() as isize + 1;
        let mut changed = 0;
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                let (c, r) = (c0.col as isize + dc, c0.row as isize + dr);
                if c < 0 || r < 0 || c as usize >= self.truth.width() || r as usize >= self.truth.height() {
                    continue;
                }
                let cell = Cell::new(c as usize, r as usize);
                let inside = cell == c0 || self.truth.center(cell).dist(self.agent) <= self.rho;
                if inside && self.belief.label(cell) != self.truth.label(cell) {
                    self.belief.set_label(cell, self.truth.label(cell));
                    changed += 1;
                }
            }
        }
        changed
    }

    fn belief_digest(&self) -> u32 {
        crc32fast::hash(self.belief.labels())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReplanMode {
    /// Replan on every loop iteration.
    #[default]
    Always,
    /// Reuse the current plan while the belief is unchanged.
    OnChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    /// Step budget; `None` means ten times the number of map cells.
    pub max_steps: Option<usize>,
    pub replan: ReplanMode,
    /// Cells executed per iteration; `None` runs to the next region transit.
    pub horizon: Option<usize>,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self { max_steps: None, replan: ReplanMode::Always, horizon: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub agent_pos: Point,
    pub plan_id: Option<usize>,
    pub observation_digest: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub id: usize,
    pub t: usize,
    pub from: Point,
    pub graph_path: Vec<usize>,
    pub relaxed: Vec<usize>,
    pub path: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub scenario_id: String,
    pub planner: String,
    pub start: Point,
    pub goal: Point,
    pub trajectory: Vec<Point>,
    pub steps: Vec<StepRecord>,
    pub plans: Vec<PlanRecord>,
    pub reached: bool,
    /// Trajectory cells whose truth class was hard when entered.
    pub hard_entries: usize,
    pub success: bool,
    pub path_length: f64,
    pub failed_plans: usize,
}

impl EpisodeLog {
    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        fs::write(path, serde_json::to_string_pretty(self).expect("episode logs always serialize"))
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let s = fs::read_to_string(path)?;
        serde_json::from_str(&s).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// Relaxed regions of every plan, deduplicated and sorted.
    pub fn all_relaxed(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.plans.iter().flat_map(|p| p.relaxed.iter().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Outcome of one execute call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecOutcome {
    /// Horizon used up or region transit reached.
    Advanced,
    /// Belief changed during execution.
    BeliefChanged,
    /// Next cell is hard in the belief; the agent stayed put.
    Blocked,
    /// Agent is at the last cell of the plan.
    Finished,
}

/// Moves the agent along `plan.cells[*progress..]` one cell per step,
/// observing after every step. Stops at the horizon, at a region transit (when
/// `horizon` is `None`), when the belief changes, or before a cell that is hard
/// in the belief.
pub fn execute(
    sim: &mut WorldSim,
    plan: &Plan,
    progress: &mut usize,
    horizon: Option<usize>,
    goal: Point,
    log: &mut EpisodeLog,
    plan_id: Option<usize>,
) -> Result<ExecOutcome, NavError> {
    if plan.cells.is_empty() {
        return Err(NavError::PlanExhausted);
    }
    let mut moved = 0;
    loop {
        if *progress + 1 >= plan.cells.len() {
            return Ok(ExecOutcome::Finished);
        }
        if horizon.is_some_and(|h| moved >= h) {
            return Ok(ExecOutcome::Advanced);
        }
        let next = plan.cells[*progress + 1];
        if sim.belief.class(next) == RegionClass::Hard {
            return Ok(ExecOutcome::Blocked);
        }
        *progress += 1;
        moved += 1;
        sim.agent = if *progress + 1 == plan.cells.len() { goal } else { sim.truth.center(next) };
        sim.t += 1;
        if sim.truth.class(next) == RegionClass::Hard {
            log.hard_entries += 1;
        }
        log.trajectory.push(sim.agent);
        let changed = sim.observe();
        log.steps.push(StepRecord {
            t: sim.t,
            agent_pos: sim.agent,
            plan_id,
            observation_digest: sim.belief_digest(),
        });
        if changed > 0 {
            return Ok(ExecOutcome::BeliefChanged);
        }
        if horizon.is_none() && plan.transits.contains(progress) {
            return Ok(ExecOutcome::Advanced);
        }
    }
}

/// Runs the loop until the agent stands in the goal cell or the step budget
/// is spent. Plans are computed from the anchor, the agent position at the
/// most recent belief change, so replanning with an unchanged belief
/// reproduces the plan being executed.
pub fn run_episode(
    mut sim: WorldSim,
    planner: &mut dyn Planner,
    goal: Point,
    cfg: &EpisodeConfig,
    scenario_id: &str,
) -> EpisodeLog {
    let start = sim.agent;
    let max_steps = cfg.max_steps.unwrap_or(10 * sim.truth.len());
    let mut log = EpisodeLog {
        scenario_id: scenario_id.to_string(),
        planner: planner.name().to_string(),
        start,
        goal,
        trajectory: vec![start],
        steps: Vec::new(),
        plans: Vec::new(),
        reached: false,
        hard_entries: 0,
        success: false,
        path_length: 0.0,
        failed_plans: 0,
    };
    let goal_cell = sim.truth.cell_of(goal);
    if let Some(c) = sim.agent_cell() {
        if sim.truth.class(c) == RegionClass::Hard {
            log.hard_entries += 1;
        }
    }
    sim.observe();
    log.steps.push(StepRecord { t: 0, agent_pos: start, plan_id: None, observation_digest: sim.belief_digest() });
    let reset_ok = planner.reset(&sim.belief, start, goal).is_ok();

    let mut anchor = start;
    let mut progress = 0;
    let mut current: Option<(Plan, usize)> = None;
    let mut dirty = true;
    while sim.t < max_steps {
        if sim.agent_cell().is_some() && sim.agent_cell() == goal_cell {
            log.reached = true;
            break;
        }
        if dirty || cfg.replan == ReplanMode::Always || current.is_none() {
            if dirty {
                anchor = sim.agent;
                progress = 0;
            }
            let planned = if reset_ok { planner.plan(&sim.belief, anchor, goal) } else { Err(NavError::NotReset) };
            dirty = false;
            match planned {
                Ok(plan) => {
                    let same = current.as_ref().is_some_and(|(p, _)| *p == plan);
                    if !same {
                        let id = log.plans.len();
                        log.plans.push(PlanRecord {
                            id,
                            t: sim.t,
                            from: anchor,
                            graph_path: plan.graph_path.clone(),
                            relaxed: plan.relaxed.clone(),
                            path: plan.path.clone(),
                        });
                        current = Some((plan, id));
                    }
                }
                Err(_) => {
                    log.failed_plans += 1;
                    current = None;
                    // wait in place
                    sim.t += 1;
                    if sim.observe() > 0 {
                        dirty = true;
                    }
                    log.steps.push(StepRecord {
                        t: sim.t,
                        agent_pos: sim.agent,
                        plan_id: None,
                        observation_digest: sim.belief_digest(),
                    });
                    continue;
                }
            }
        }
        let (plan, id) = current.as_ref().expect("a plan is available here");
        match execute(&mut sim, plan, &mut progress, cfg.horizon, goal, &mut log, Some(*id)) {
            Ok(ExecOutcome::BeliefChanged) => dirty = true,
            Ok(ExecOutcome::Advanced) => {}
            Ok(ExecOutcome::Finished) | Ok(ExecOutcome::Blocked) | Err(_) => {
                // nothing left to execute from here: wait for the world to change
                sim.t += 1;
                sim.observe();
                dirty = true;
                log.steps.push(StepRecord {
                    t: sim.t,
                    agent_pos: sim.agent,
                    plan_id: Some(*id),
                    observation_digest: sim.belief_digest(),
                });
            }
        }
    }
    if !log.reached && sim.agent_cell().is_some() && sim.agent_cell() == goal_cell {
        log.reached = true;
    }
    log.path_length = polyline_length(&log.trajectory);
    log.success = log.reached && log.hard_entries == 0;
    log
}
