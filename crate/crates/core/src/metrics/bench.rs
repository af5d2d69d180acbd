use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{frechet, relax_iou, shortest_feasible, spl, success, total_risk, trajectory_cells, MetricError};
use crate::baselines::{traversed_soft_regions, ClassOrder, CoaStarPlanner, DStarPlanner, LabelCostTable, RcrParams, RcrPlanner};
use crate::nav::{run_episode, EpisodeConfig, EpisodeLog, Granularity, Planner, ReplanMode, SurenavPlanner, WorldSim, DEFAULT_SENSING_RADIUS};
use crate::relax_gnn::RelaxModel;
use crate::semantic_map::{perturbed_grid, RiskTable, Scenario, SemanticGrid};
use crate::superpixel::{slic_segment, SlicParams};
use crate::training::{default_oracle_costs, oracle_expert};

/// Column order of `report.csv`.
pub const REPORT_COLUMNS: [&str; 11] = [
    "planner",
    "map_id",
    "scenario_id",
    "success",
    "spl",
    "frechet_norm",
    "relax_iou",
    "total_risk",
    "path_length_m",
    "plans",
    "error",
];

#[derive(Debug, Clone)]
pub enum PlannerSpec {
    Surenav { model: RelaxModel, granularity: Granularity },
    DStar(LabelCostTable),
    CoaStar(ClassOrder),
    Rcr { risk: RiskTable, params: RcrParams },
}

impl PlannerSpec {
    pub fn name(&self) -> String {
        match self {
            PlannerSpec::Surenav { granularity: Granularity::ContinuousUnion, .. } => "surenav".into(),
            PlannerSpec::Surenav { granularity, .. } => {
                let g = serde_json::to_value(granularity).expect("granularity serializes");
                format!("surenav-{}", g.as_str().unwrap_or("custom"))
            }
            PlannerSpec::DStar(_) => "dstar".into(),
            PlannerSpec::CoaStar(_) => "coastar".into(),
            PlannerSpec::Rcr { .. } => "rcr".into(),
        }
    }

    pub fn build(&self, slic: Option<SlicParams>) -> Box<dyn Planner> {
        match self {
            PlannerSpec::Surenav { model, granularity } => {
                let mut p = SurenavPlanner::new(model.clone()).with_granularity(*granularity);
                p.slic = slic;
                Box::new(p)
            }
            PlannerSpec::DStar(costs) => Box::new(DStarPlanner::new(costs.clone())),
            PlannerSpec::CoaStar(order) => Box::new(CoaStarPlanner { order: order.clone() }),
            PlannerSpec::Rcr { risk, params } => {
                let mut p = RcrPlanner::new(risk.clone());
                p.params = *params;
                p.slic = slic;
                Box::new(p)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub rho: f64,
    pub max_steps: Option<usize>,
    pub replan: ReplanMode,
    /// Per-meter label penalties of the reference expert; defaults to
    /// [`default_oracle_costs`].
    pub reference_costs: Option<Vec<f64>>,
    pub slic: Option<SlicParams>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { rho: DEFAULT_SENSING_RADIUS, max_steps: None, replan: ReplanMode::OnChange, reference_costs: None, slic: None }
    }
}

/// One benchmark episode. Runtime is kept out of the CSV so reports are
/// reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub planner: String,
    pub map_id: String,
    pub scenario_id: String,
    pub success: u8,
    pub spl: f64,
    pub frechet_norm: Option<f64>,
    pub relax_iou: Option<f64>,
    pub total_risk: f64,
    pub path_length_m: f64,
    pub plans: usize,
    pub error: String,
    #[serde(skip)]
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub planner: String,
    /// `None` aggregates over all maps.
    pub map_id: Option<String>,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_spl: f64,
    pub mean_frechet_norm: Option<f64>,
    pub mean_relax_iou: Option<f64>,
    pub mean_total_risk: f64,
    pub mean_path_length_m: f64,
    pub mean_runtime_ms: f64,
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<EpisodeRow>,
    pub aggregates: Vec<Aggregate>,
}

impl MetricReport {
    pub fn aggregate_for(&self, planner: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.planner == planner && a.map_id.is_none())
    }

    pub fn to_csv(&self) -> Result<String, MetricError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn scatter_csv(&self) -> Result<String, MetricError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["planner", "scenario_id", "spl", "total_risk"])?;
        for r in &self.rows {
            w.write_record([r.planner.clone(), r.scenario_id.clone(), r.spl.to_string(), r.total_risk.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes `report.csv`, `report.json` and `scatter.csv`.
    pub fn write(&self, out_dir: &Path) -> Result<(), MetricError> {
        fs::create_dir_all(out_dir)?;
        fs::write(out_dir.join("report.csv"), self.to_csv()?)?;
        fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        fs::write(out_dir.join("scatter.csv"), self.scatter_csv()?)?;
        Ok(())
    }
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn aggregate(planner: &str, map_id: Option<&str>, rows: &[&EpisodeRow]) -> Aggregate {
    let n = rows.len();
    let successes = rows.iter().filter(|r| r.success == 1).count();
    Aggregate {
        planner: planner.to_string(),
        map_id: map_id.map(str::to_string),
        episodes: n,
        successes,
        success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
        mean_spl: mean(rows.iter().map(|r| r.spl)).unwrap_or(0.0),
        mean_frechet_norm: mean(rows.iter().filter_map(|r| r.frechet_norm)),
        mean_relax_iou: mean(rows.iter().filter_map(|r| r.relax_iou)),
        mean_total_risk: mean(rows.iter().map(|r| r.total_risk)).unwrap_or(0.0),
        mean_path_length_m: mean(rows.iter().map(|r| r.path_length_m)).unwrap_or(0.0),
        mean_runtime_ms: mean(rows.iter().map(|r| r.runtime_ms)).unwrap_or(0.0),
        errors: rows.iter().filter(|r| !r.error.is_empty()).count(),
    }
}

fn aggregates(rows: &[EpisodeRow]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(String, Option<String>), Vec<&EpisodeRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.planner.clone(), None)).or_default().push(r);
        groups.entry((r.planner.clone(), Some(r.map_id.clone()))).or_default().push(r);
    }
    groups.iter().map(|((p, m), rs)| aggregate(p, m.as_deref(), rs)).collect()
}

/// Relaxation IoU of a single plan on the truth map against the reference
/// expert's soft regions on the same segmentation.
pub fn one_shot_iou(
    spec: &PlannerSpec,
    truth: &SemanticGrid,
    scenario: &Scenario,
    reference: &[crate::geom::Point],
    slic: Option<SlicParams>,
) -> Result<f64, String> {
    let params = slic.unwrap_or_else(|| SlicParams::for_grid(truth));
    let seg = slic_segment(truth, &params).map_err(|e| e.to_string())?;
    let mut planner = spec.build(slic);
    planner.reset(truth, scenario.start, scenario.goal).map_err(|e| e.to_string())?;
    let plan = planner.plan(truth, scenario.start, scenario.goal).map_err(|e| e.to_string())?;
    let pred = if planner.explicit_relaxation() { plan.relaxed.clone() } else { traversed_soft_regions(truth, &seg, &plan.cells) };
    let target = traversed_soft_regions(truth, &seg, &trajectory_cells(truth, reference));
    relax_iou(&pred, &target, seg.n_regions()).map_err(|e| e.to_string())
}

/// The truth map of a scenario: its perturbations applied to the map in order.
pub fn scenario_truth(map: &SemanticGrid, scenario: &Scenario, slic: Option<SlicParams>) -> Result<SemanticGrid, String> {
    if scenario.perturbations.is_empty() {
        return Ok(map.clone());
    }
    let seg = slic_segment(map, &slic.unwrap_or_else(|| SlicParams::for_grid(map))).map_err(|e| e.to_string())?;
    perturbed_grid(map, &seg, &scenario.perturbations, Some(scenario.perturbations.len() - 1)).map_err(|e| e.to_string())
}

fn run_one(spec: &PlannerSpec, map: Option<&SemanticGrid>, scenario: &Scenario, cfg: &BenchConfig) -> (EpisodeRow, Option<EpisodeLog>) {
    let mut row = EpisodeRow {
        planner: spec.name(),
        map_id: scenario.map_id.clone(),
        scenario_id: scenario.id.clone(),
        success: 0,
        spl: 0.0,
        frechet_norm: None,
        relax_iou: None,
        total_risk: 0.0,
        path_length_m: 0.0,
        plans: 0,
        error: String::new(),
        runtime_ms: 0.0,
    };
    let mut errors = Vec::new();
    let Some(prior) = map else {
        row.error = format!("unknown map {}", scenario.map_id);
        return (row, None);
    };
    let truth = match scenario_truth(prior, scenario, cfg.slic) {
        Ok(t) => t,
        Err(e) => {
            row.error = e;
            return (row, None);
        }
    };
    let event_seg = match slic_segment(prior, &cfg.slic.unwrap_or_else(|| SlicParams::for_grid(prior))) {
        Ok(s) => s,
        Err(e) => {
            row.error = e.to_string();
            return (row, None);
        }
    };
    let mut planner = spec.build(cfg.slic);
    let clock = Instant::now();
    let sim = WorldSim::new(prior.clone(), truth.clone(), Vec::new(), event_seg, scenario.start, cfg.rho);
    let ecfg = EpisodeConfig { max_steps: cfg.max_steps, replan: cfg.replan, horizon: None };
    let log = run_episode(sim, planner.as_mut(), scenario.goal, &ecfg, &scenario.id);
    row.runtime_ms = clock.elapsed().as_secs_f64() * 1e3;
    let ok = success(&log, &truth);
    row.success = ok as u8;
    row.plans = log.plans.len();
    row.path_length_m = log.path_length;
    row.total_risk = total_risk(&log.trajectory, &truth, &scenario.risk_table);
    match shortest_feasible(&truth, scenario.start, scenario.goal).and_then(|s| spl(ok, log.path_length, s)) {
        Ok(v) => row.spl = v,
        Err(e) => errors.push(e.to_string()),
    }
    let costs = cfg.reference_costs.clone().unwrap_or_else(|| default_oracle_costs(truth.label_table()));
    match oracle_expert(&truth, scenario, &costs) {
        Ok(reference) => {
            match frechet(&log.trajectory, &reference.polyline, scenario.start, scenario.goal, truth.resolution()) {
                Ok(f) => row.frechet_norm = Some(f),
                Err(e) => errors.push(e.to_string()),
            }
            match one_shot_iou(spec, &truth, scenario, &reference.polyline, cfg.slic) {
                Ok(v) => row.relax_iou = Some(v),
                Err(e) => errors.push(format!("one-shot plan: {e}")),
            }
        }
        Err(e) => errors.push(format!("reference: {e}")),
    }
    row.error = errors.join("; ");
    (row, Some(log))
}

/// Runs every planner on every scenario with the unperturbed map as prior
/// belief and the perturbed map as truth. Per-episode failures are recorded
/// in the rows; the sweep itself only fails on output errors. Rows are sorted
/// by planner, then scenario.
pub fn run_benchmark(
    maps: &BTreeMap<String, SemanticGrid>,
    scenarios: &[Scenario],
    planners: &[PlannerSpec],
    cfg: &BenchConfig,
    out_dir: Option<&Path>,
) -> Result<MetricReport, MetricError> {
    let jobs: Vec<(&PlannerSpec, &Scenario)> = planners.iter().flat_map(|p| scenarios.iter().map(move |s| (p, s))).collect();
    let results: Vec<(EpisodeRow, Option<EpisodeLog>)> =
        jobs.par_iter().map(|&(p, s)| run_one(p, maps.get(&s.map_id), s, cfg)).collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut logs = Vec::new();
    for (row, log) in results {
        if let Some(log) = log {
            logs.push((row.planner.clone(), log));
        }
        rows.push(row);
    }
    rows.sort_by(|a, b| (&a.planner, &a.scenario_id, &a.map_id).cmp(&(&b.planner, &b.scenario_id, &b.map_id)));
    let report = MetricReport { aggregates: aggregates(&rows), rows };
    if let Some(dir) = out_dir {
        report.write(dir)?;
        let ep_dir = dir.join("episodes");
        fs::create_dir_all(&ep_dir)?;
        for (planner, log) in &logs {
            log.save(ep_dir.join(format!("{planner}.{}.episode.json", log.scenario_id)))?;
        }
    }
    Ok(report)
}
