//! Pipeline stages behind the `relaxnav` subcommands. Each returns a JSON
//! summary that the binary prints on stdout.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use relaxnav_core::baselines::{derive_class_order, derive_costs, traversed_labels, ClassOrder, LabelCostTable, RcrParams};
use relaxnav_core::metrics::{run_benchmark, scenario_truth, BenchConfig, PlannerSpec};
use relaxnav_core::nav::{run_episode, EpisodeConfig, Granularity, Planner, ReplanMode, SurenavPlanner, WorldSim};
use relaxnav_core::relax_gnn::{load_model, save_model, Checkpoint, ModelConfig, RelaxModel};
use relaxnav_core::semantic_map::synth::{city_map, CityParams};
use relaxnav_core::semantic_map::{
    load_map, load_risk_table, load_scenarios, perturbed_grid, sample_route_perturbation, sample_scenarios, save_map,
    save_scenarios,
};
use relaxnav_core::superpixel::{
    build_graph, build_graph_unanchored, slic_segment, GraphFile, SegmentationFile, DEFAULT_TAU,
};
use relaxnav_core::training::{
    dataset_loss, default_oracle_costs, load_demos, oracle_expert, prepare_sample, save_demos, synth_dataset, train_with,
    DatasetSpec, Demonstration, LossConfig, TrainConfig, TrainSample,
};
use relaxnav_core::{Perturbation, Point, RiskTable, Scenario, SemanticGrid, SlicParams};

use crate::render::plan_overlay_png;

pub fn parse_point(s: &str) -> Result<Point, String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected x,y, got {s:?}"))?;
    let x: f64 = x.trim().parse().map_err(|e| format!("bad x in {s:?}: {e}"))?;
    let y: f64 = y.trim().parse().map_err(|e| format!("bad y in {s:?}: {e}"))?;
    Ok(Point::new(x, y))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Every `*.smap` file in `dir`, keyed by file stem.
pub fn load_maps_dir(dir: &Path) -> Result<BTreeMap<String, SemanticGrid>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "smap") {
            let id = path.file_stem().and_then(|s| s.to_str()).ok_or_else(|| anyhow!("bad map file name"))?;
            out.insert(id.to_owned(), load_map(&path).with_context(|| format!("loading {}", path.display()))?);
        }
    }
    Ok(out)
}

fn map_for<'a>(maps: &'a BTreeMap<String, SemanticGrid>, scenario: &Scenario) -> Result<&'a SemanticGrid> {
    maps.get(&scenario.map_id)
        .ok_or_else(|| anyhow!("scenario {} refers to unknown map {}", scenario.id, scenario.map_id))
}

fn pick_scenario(path: &Path, id: Option<&str>) -> Result<Scenario> {
    let all = load_scenarios(path)?;
    match id {
        Some(id) => all.into_iter().find(|s| s.id == id).ok_or_else(|| anyhow!("no scenario {id} in {}", path.display())),
        None => all.into_iter().next().ok_or_else(|| anyhow!("{} holds no scenarios", path.display())),
    }
}

fn label_by_name(grid: &SemanticGrid, name: &str) -> Result<u8> {
    grid.label_index(name).ok_or_else(|| anyhow!("unknown label {name}"))
}

fn slic_params(grid: &SemanticGrid, n: Option<usize>, compactness: f64, max_iters: usize) -> SlicParams {
    let base = SlicParams::for_grid(grid);
    SlicParams { target_n: n.unwrap_or(base.target_n), compactness, max_iters }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum GranularityArg {
    GraphPlan,
    Portal,
    ContinuousWithin,
    ContinuousUnion,
}

impl From<GranularityArg> for Granularity {
    fn from(g: GranularityArg) -> Self {
        match g {
            GranularityArg::GraphPlan => Granularity::GraphPlan,
            GranularityArg::Portal => Granularity::Portal,
            GranularityArg::ContinuousWithin => Granularity::ContinuousWithin,
            GranularityArg::ContinuousUnion => Granularity::ContinuousUnion,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReplanArg {
    Always,
    OnChange,
}

impl From<ReplanArg> for ReplanMode {
    fn from(r: ReplanArg) -> Self {
        match r {
            ReplanArg::Always => ReplanMode::Always,
            ReplanArg::OnChange => ReplanMode::OnChange,
        }
    }
}

// ---------------------------------------------------------------- gen-map

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenMapArgs {
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub crosswalk_prob: f64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn gen_map(a: &GenMapArgs) -> Result<Value> {
    if !(0.0..=1.0).contains(&a.crosswalk_prob) {
        bail!("crosswalk probability must lie in [0, 1]");
    }
    let p = CityParams { width: a.size, height: a.size, crosswalk_prob: a.crosswalk_prob, ..CityParams::default() };
    if a.size < p.block {
        bail!("map size must be at least {}", p.block);
    }
    let grid = city_map(&p, a.seed);
    save_map(&grid, &a.out)?;
    let [free, soft, hard] = grid.class_counts();
    Ok(json!({ "map": a.out, "width": grid.width(), "height": grid.height(), "free": free, "soft": soft, "hard": hard }))
}

// ---------------------------------------------------------------- dataset

#[derive(Debug, Clone, Args, Serialize)]
pub struct DatasetArgs {
    #[arg(long, default_value_t = 5)]
    pub maps: usize,
    #[arg(long, default_value_t = 48)]
    pub size: usize,
    #[arg(long, default_value_t = 0.5)]
    pub crosswalk_prob: f64,
    #[arg(long, default_value_t = 24)]
    pub train_per_map: usize,
    #[arg(long, default_value_t = 4)]
    pub held_out_per_map: usize,
    #[arg(long, default_value_t = 1)]
    pub radius: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

impl DatasetArgs {
    pub fn spec(&self) -> DatasetSpec {
        DatasetSpec {
            maps: self.maps,
            size: self.size,
            crosswalk_prob: self.crosswalk_prob,
            train_per_map: self.train_per_map,
            held_out_per_map: self.held_out_per_map,
            radius: self.radius,
            seed: self.seed,
            ..DatasetSpec::default()
        }
    }
}

/// Writes `maps/*.smap`, `scenarios.json` and `demos.ndjson` for training and
/// `heldout.json` and `heldout_demos.ndjson` for evaluation.
pub fn dataset(a: &DatasetArgs) -> Result<Value> {
    let costs = default_oracle_costs(&relaxnav_core::semantic_map::urban_labels());
    let ds = synth_dataset(&a.spec(), &costs)?;
    fs::create_dir_all(a.out.join("maps"))?;
    for (id, grid) in &ds.maps {
        save_map(grid, a.out.join("maps").join(format!("{id}.smap")))?;
    }
    let split = |v: &[(Scenario, Demonstration)]| -> (Vec<Scenario>, Vec<Demonstration>) { v.iter().cloned().unzip() };
    let (train_s, train_d) = split(&ds.train);
    let (held_s, held_d) = split(&ds.held_out);
    save_scenarios(&train_s, a.out.join("scenarios.json"))?;
    save_demos(a.out.join("demos.ndjson"), &train_d)?;
    save_scenarios(&held_s, a.out.join("heldout.json"))?;
    save_demos(a.out.join("heldout_demos.ndjson"), &held_d)?;
    write_json(&a.out.join("dataset.json"), &a.spec())?;
    Ok(json!({ "dir": a.out, "maps": ds.maps.len(), "train": train_d.len(), "held_out": held_d.len() }))
}

// ---------------------------------------------------------------- scenarios

#[derive(Debug, Clone, Args, Serialize)]
pub struct ScenariosArgs {
    pub map: PathBuf,
    /// Map id recorded in the scenarios; defaults to the file stem.
    #[arg(long)]
    pub map_id: Option<String>,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = relaxnav_core::semantic_map::DEFAULT_D_MIN)]
    pub d_min: f64,
    #[arg(long, default_value_t = relaxnav_core::semantic_map::DEFAULT_D_MAX)]
    pub d_max: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON risk table attached to every scenario; defaults to the urban table.
    #[arg(long)]
    pub risk_table: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn scenarios(a: &ScenariosArgs) -> Result<Value> {
    let grid = load_map(&a.map)?;
    let id = match &a.map_id {
        Some(id) => id.clone(),
        None => a.map.file_stem().and_then(|s| s.to_str()).unwrap_or("map").to_owned(),
    };
    let risk = match &a.risk_table {
        Some(p) => load_risk_table(p)?,
        None => RiskTable::urban_default(),
    };
    let mut list = sample_scenarios(&grid, &id, a.n, a.d_min, a.d_max, a.seed)?;
    for s in &mut list {
        s.risk_table = risk.clone();
    }
    save_scenarios(&list, &a.out)?;
    Ok(json!({ "scenarios": a.out, "count": list.len() }))
}

// ---------------------------------------------------------------- segment

#[derive(Debug, Clone, Args, Serialize)]
pub struct SegmentArgs {
    pub map: PathBuf,
    /// Target superpixel count; defaults to one per 25 m² of traversable area.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 10.0)]
    pub compactness: f64,
    #[arg(long, default_value_t = 10)]
    pub max_iters: usize,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    pub tau: u32,
    #[arg(long, value_parser = parse_point, requires = "goal")]
    #[serde(skip)]
    pub start: Option<Point>,
    #[arg(long, value_parser = parse_point, requires = "start")]
    #[serde(skip)]
    pub goal: Option<Point>,
    /// Output prefix: writes `<out>.seg.json` and `<out>.graph.json`.
    #[arg(long)]
    pub out: PathBuf,
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn segment(a: &SegmentArgs) -> Result<Value> {
    let grid = load_map(&a.map)?;
    let params = slic_params(&grid, a.n, a.compactness, a.max_iters);
    let seg = slic_segment(&grid, &params)?;
    let graph = match (a.start, a.goal) {
        (Some(s), Some(g)) => build_graph(&grid, &seg, s, g, a.tau)?,
        _ => build_graph_unanchored(&grid, &seg, a.tau)?,
    };
    let seg_path = with_suffix(&a.out, ".seg.json");
    let graph_path = with_suffix(&a.out, ".graph.json");
    write_json(&seg_path, &SegmentationFile::from_segmentation(&seg))?;
    write_json(&graph_path, &GraphFile::from_graph(&graph, &grid))?;
    Ok(json!({ "segmentation": seg_path, "graph": graph_path, "nodes": graph.len(), "edges": graph.edges.len() }))
}

// ---------------------------------------------------------------- perturb

#[derive(Debug, Clone, Args, Serialize)]
pub struct PerturbArgs {
    pub map: PathBuf,
    /// Segmentation file; computed with default parameters when absent.
    #[arg(long)]
    pub seg: Option<PathBuf>,
    /// Explicit seed positions (x,y in meters), repeatable.
    #[arg(long = "at", value_parser = parse_point)]
    #[serde(skip)]
    pub seeds: Vec<Point>,
    /// Demonstration file whose first route receives the perturbations.
    #[arg(long, conflicts_with = "seeds")]
    pub route: Option<PathBuf>,
    /// Number of sampled perturbations when no explicit seeds are given.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 1)]
    pub radius: u32,
    #[arg(long, default_value = "blocked")]
    pub label: String,
    #[arg(long, default_value_t = 0)]
    pub rng: u64,
    /// Perturbed map; the perturbation list goes to `<out>.perturbations.json`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn perturb(a: &PerturbArgs) -> Result<Value> {
    let grid = load_map(&a.map)?;
    let seg = match &a.seg {
        Some(p) => read_json::<SegmentationFile>(p)?.to_segmentation(&grid)?,
        None => slic_segment(&grid, &SlicParams::for_grid(&grid))?,
    };
    let new_label = label_by_name(&grid, &a.label)?;
    let mut list: Vec<Perturbation> = a.seeds.iter().map(|&p| Perturbation { seed_position: p, radius: a.radius, new_label }).collect();
    if list.is_empty() {
        if let Some(route_file) = &a.route {
            let demo = load_demos(route_file)?.into_iter().next().ok_or_else(|| anyhow!("route file holds no demonstrations"))?;
            for k in 0..a.count {
                list.push(sample_route_perturbation(&grid, &seg, &demo.polyline, a.radius, new_label, a.rng.wrapping_add(k as u64))?);
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(a.rng);
            let cells: Vec<usize> = (0..grid.len()).filter(|&i| seg.region_at(i).is_some()).collect();
            if cells.is_empty() {
                bail!("map has no traversable cells");
            }
            for _ in 0..a.count {
                let c = grid.cell_at(cells[rng.gen_range(0..cells.len())]);
                list.push(Perturbation { seed_position: grid.center(c), radius: a.radius, new_label });
            }
        }
    }
    if list.is_empty() {
        bail!("no perturbations requested");
    }
    let out = perturbed_grid(&grid, &seg, &list, Some(list.len() - 1))?;
    save_map(&out, &a.out)?;
    let list_path = with_suffix(&a.out, ".perturbations.json");
    write_json(&list_path, &list)?;
    Ok(json!({ "map": a.out, "perturbations": list_path, "changed_cells": grid.changed_cells(&out).len() }))
}

// ---------------------------------------------------------------- oracle

#[derive(Debug, Clone, Args, Serialize)]
pub struct OracleArgs {
    /// Directory of `<map_id>.smap` files.
    #[arg(long, required_unless_present = "map")]
    pub maps: Option<PathBuf>,
    /// Single map used for every scenario.
    #[arg(long, conflicts_with = "maps")]
    pub map: Option<PathBuf>,
    #[arg(long)]
    pub scenarios: PathBuf,
    /// JSON object of per-meter penalties by label name; missing Soft labels
    /// take the default expert's value.
    #[arg(long)]
    pub cost_table: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn resolve_cost_table(grid: &SemanticGrid, path: Option<&Path>) -> Result<Vec<f64>> {
    let mut costs = default_oracle_costs(grid.label_table());
    if let Some(p) = path {
        let table: BTreeMap<String, f64> = read_json(p)?;
        for (name, c) in table {
            let l = label_by_name(grid, &name)?;
            if !(c >= 0.0) {
                bail!("cost for {name} must be non-negative");
            }
            costs[l as usize] = c;
        }
    }
    Ok(costs)
}

/// Expert routes on each scenario's truth map (all of its perturbations applied).
pub fn oracle(a: &OracleArgs) -> Result<Value> {
    let scenarios = load_scenarios(&a.scenarios)?;
    let maps = match (&a.maps, &a.map) {
        (Some(dir), _) => load_maps_dir(dir)?,
        (None, Some(file)) => {
            let g = load_map(file)?;
            scenarios.iter().map(|s| (s.map_id.clone(), g.clone())).collect()
        }
        (None, None) => bail!("either --maps or --map is required"),
    };
    let mut demos = Vec::new();
    let mut skipped = Vec::new();
    for s in &scenarios {
        let map = map_for(&maps, s)?;
        let truth = scenario_truth(map, s, None).map_err(|e| anyhow!(e))?;
        let costs = resolve_cost_table(map, a.cost_table.as_deref())?;
        match oracle_expert(&truth, s, &costs) {
            Ok(mut d) => {
                d.perturbation_index = s.perturbations.len().checked_sub(1);
                demos.push(d);
            }
            Err(e) => skipped.push(json!({ "scenario": s.id, "error": e.to_string() })),
        }
    }
    save_demos(&a.out, &demos)?;
    Ok(json!({ "demos": a.out, "count": demos.len(), "skipped": skipped }))
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Directory with `maps/`, `scenarios.json` and `demos.ndjson`.
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.3)]
    pub wfp: f64,
    #[arg(long, default_value_t = 0.7)]
    pub wfn: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_scale: f64,
    #[arg(long, default_value_t = 5.0)]
    pub clip_norm: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long, default_value_t = 3)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    /// Checkpoint path; the loss curve goes to `<out>.history.json`.
    #[arg(long)]
    pub out: PathBuf,
}

impl TrainArgs {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch_size,
            clip_norm: self.clip_norm,
            lambda_scale: self.lambda_scale,
            loss: LossConfig { w_fp: self.wfp, w_fn: self.wfn, gamma: self.gamma },
            seed: self.seed,
        }
    }
}

/// Projects every demonstration of a dataset directory onto its scenario graph.
pub fn load_samples(dir: &Path) -> Result<(BTreeMap<String, SemanticGrid>, Vec<Scenario>, Vec<TrainSample>)> {
    let maps = load_maps_dir(&dir.join("maps"))?;
    let scenarios = load_scenarios(dir.join("scenarios.json"))?;
    let demos = load_demos(dir.join("demos.ndjson"))?;
    let samples = project_demos(&maps, &scenarios, &demos)?;
    Ok((maps, scenarios, samples))
}

pub fn project_demos(
    maps: &BTreeMap<String, SemanticGrid>,
    scenarios: &[Scenario],
    demos: &[Demonstration],
) -> Result<Vec<TrainSample>> {
    let by_id: BTreeMap<&str, &Scenario> = scenarios.iter().map(|s| (s.id.as_str(), s)).collect();
    demos
        .iter()
        .map(|d| {
            let s = by_id
                .get(d.scenario_id.as_str())
                .ok_or_else(|| anyhow!("demonstration for unknown scenario {}", d.scenario_id))?;
            let map = map_for(maps, s)?;
            prepare_sample(map, s, d, &SlicParams::for_grid(map)).with_context(|| format!("projecting demo of {}", s.id))
        })
        .collect()
}

pub fn train(a: &TrainArgs) -> Result<Value> {
    let (_, _, samples) = load_samples(&a.dataset)?;
    let cfg = a.train_config();
    let labels = samples.first().ok_or_else(|| anyhow!("dataset holds no demonstrations"))?.graph.label_count();
    let model_cfg = ModelConfig { hidden: a.hidden, layers: a.layers, heads: a.heads, ..ModelConfig::new(labels) };
    let model = RelaxModel::new(model_cfg, a.seed)?;
    let initial = dataset_loss(&model, &samples, &cfg)?;
    let (trained, history) = train_with(&samples, &model, &cfg, |epoch, loss| {
        tracing::info!(epoch, loss, "epoch done");
    })?;
    let final_loss = dataset_loss(&trained, &samples, &cfg)?;
    let ckpt = Checkpoint { model: trained, epoch: a.epochs as u32, loss: final_loss };
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_model(&a.out, &ckpt)?;
    let hist_path = with_suffix(&a.out, ".history.json");
    write_json(&hist_path, &json!({ "initial_loss": initial, "epoch_loss": history, "final_loss": final_loss }))?;
    Ok(json!({
        "model": a.out,
        "samples": samples.len(),
        "parameters": ckpt.model.param_count(),
        "initial_loss": initial,
        "final_loss": final_loss,
    }))
}

// ---------------------------------------------------------------- plan

#[derive(Debug, Clone, Args, Serialize)]
pub struct PlanArgs {
    pub map: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Scenario file; the scenario's perturbations are applied to the map.
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long, value_enum, default_value_t = GranularityArg::ContinuousUnion)]
    pub granularity: GranularityArg,
    /// Overlay pixels per cell.
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    /// Output prefix: writes `<out>.plan.json` and `<out>.png`.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn plan(a: &PlanArgs) -> Result<Value> {
    let map = load_map(&a.map)?;
    let scenario = pick_scenario(&a.scenario, a.id.as_deref())?;
    let truth = scenario_truth(&map, &scenario, None).map_err(|e| anyhow!(e))?;
    let model = load_model(&a.model)?.model;
    let mut planner = SurenavPlanner::new(model).with_granularity(a.granularity.into());
    planner.reset(&truth, scenario.start, scenario.goal)?;
    let plan = planner.plan(&truth, scenario.start, scenario.goal)?;
    let (seg, _) = planner.segmentation().ok_or_else(|| anyhow!("planner holds no segmentation"))?;
    let png = plan_overlay_png(&truth, seg, &plan, a.scale)?;
    let plan_path = with_suffix(&a.out, ".plan.json");
    let png_path = with_suffix(&a.out, ".png");
    write_json(&plan_path, &plan)?;
    fs::write(&png_path, png)?;
    Ok(json!({ "plan": plan_path, "overlay": png_path, "relaxed": plan.relaxed, "waypoints": plan.path.len() }))
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub t: usize,
    pub perturbation: Perturbation,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    /// Map the agent starts with.
    #[arg(long)]
    pub prior: PathBuf,
    /// Static ground truth; defaults to the prior with the scenario's
    /// perturbations applied.
    #[arg(long, conflicts_with = "events")]
    pub truth: Option<PathBuf>,
    /// JSON list of `{t, perturbation}` applied to the truth at step `t`.
    #[arg(long)]
    pub events: Option<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long, default_value_t = relaxnav_core::nav::DEFAULT_SENSING_RADIUS)]
    pub rho: f64,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, value_enum, default_value_t = ReplanArg::Always)]
    pub replan: ReplanArg,
    #[arg(long, value_enum, default_value_t = GranularityArg::ContinuousUnion)]
    pub granularity: GranularityArg,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn simulate(a: &SimulateArgs) -> Result<Value> {
    let prior = load_map(&a.prior)?;
    let scenario = pick_scenario(&a.scenario, a.id.as_deref())?;
    let event_seg = slic_segment(&prior, &SlicParams::for_grid(&prior))?;
    let (truth, events) = match (&a.truth, &a.events) {
        (Some(p), _) => (load_map(p)?, Vec::new()),
        (None, Some(p)) => {
            let list: Vec<EventRecord> = read_json(p)?;
            (prior.clone(), list.into_iter().map(|e| (e.t, e.perturbation)).collect())
        }
        (None, None) => (scenario_truth(&prior, &scenario, None).map_err(|e| anyhow!(e))?, Vec::new()),
    };
    if !truth.same_shape(&prior) {
        bail!("truth and prior maps differ in shape");
    }
    let model = load_model(&a.model)?.model;
    let mut planner = SurenavPlanner::new(model).with_granularity(a.granularity.into());
    let sim = WorldSim::new(prior, truth, events, event_seg, scenario.start, a.rho);
    let cfg = EpisodeConfig { max_steps: a.max_steps, replan: a.replan.into(), horizon: None };
    let log = run_episode(sim, &mut planner, scenario.goal, &cfg, &scenario.id);
    log.save(&a.out)?;
    Ok(json!({
        "episode": a.out,
        "reached": log.reached,
        "success": log.success,
        "steps": log.steps.len(),
        "plans": log.plans.len(),
        "path_length": log.path_length,
    }))
}

// ---------------------------------------------------------------- bench

/// Benchmark description. Relative paths resolve against the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchFile {
    /// Directory of `<map_id>.smap` files.
    pub maps: PathBuf,
    pub scenarios: PathBuf,
    /// Demonstrations and their scenarios, for the D* Lite costs and the COA*
    /// class order.
    #[serde(default)]
    pub demos: Option<PathBuf>,
    #[serde(default)]
    pub demo_scenarios: Option<PathBuf>,
    /// Checkpoint for the learned planner.
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default = "all_planners")]
    pub planners: Vec<String>,
    #[serde(default = "default_granularity")]
    pub granularity: Granularity,
    #[serde(default)]
    pub rcr: RcrParams,
    /// Risk table for the rule-based planner; defaults to the urban table.
    #[serde(default)]
    pub risk_table: Option<PathBuf>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default = "default_replan")]
    pub replan: ReplanMode,
    pub out: PathBuf,
}

fn all_planners() -> Vec<String> {
    ["surenav", "dstar", "coastar", "rcr"].map(String::from).to_vec()
}

fn default_granularity() -> Granularity {
    Granularity::ContinuousUnion
}

fn default_rho() -> f64 {
    relaxnav_core::nav::DEFAULT_SENSING_RADIUS
}

fn default_replan() -> ReplanMode {
    ReplanMode::OnChange
}

impl BenchFile {
    fn resolve(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.maps);
        fix(&mut self.scenarios);
        fix(&mut self.out);
        for p in [&mut self.demos, &mut self.demo_scenarios, &mut self.model, &mut self.risk_table].into_iter().flatten() {
            fix(p);
        }
        self
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    pub config: PathBuf,
}

/// Label traversals of projected demonstrations, for the baseline tables.
pub fn demo_traversals(samples: &[TrainSample]) -> Vec<Vec<u8>> {
    samples.iter().map(|s| traversed_labels(&s.demo.region_sequence, &s.graph)).collect()
}

pub fn baseline_tables(
    maps: &BTreeMap<String, SemanticGrid>,
    scenarios: &[Scenario],
    demos: &[Demonstration],
) -> Result<(LabelCostTable, ClassOrder)> {
    let samples = project_demos(maps, scenarios, demos)?;
    let labels = maps.values().next().ok_or_else(|| anyhow!("no maps"))?.label_table().to_vec();
    let trav = demo_traversals(&samples);
    Ok((derive_costs(&trav, &labels)?, derive_class_order(&trav, &labels)?))
}

pub fn bench(a: &BenchArgs) -> Result<Value> {
    let base = a.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let cfg: BenchFile = read_json::<BenchFile>(&a.config)?.resolve(&base);
    tracing::info!(config = %serde_json::to_string(&cfg)?, "resolved bench config");
    let maps = load_maps_dir(&cfg.maps)?;
    let scenarios = load_scenarios(&cfg.scenarios)?;
    let needs_tables = cfg.planners.iter().any(|p| p == "dstar" || p == "coastar");
    let tables = if needs_tables {
        let demos_path = cfg.demos.as_ref().ok_or_else(|| anyhow!("dstar and coastar need `demos`"))?;
        let demos = load_demos(demos_path)?;
        let demo_scenarios = match &cfg.demo_scenarios {
            Some(p) => load_scenarios(p)?,
            None => scenarios.clone(),
        };
        Some(baseline_tables(&maps, &demo_scenarios, &demos)?)
    } else {
        None
    };
    let risk = match &cfg.risk_table {
        Some(p) => load_risk_table(p)?,
        None => RiskTable::urban_default(),
    };
    let mut specs = Vec::new();
    for name in &cfg.planners {
        specs.push(match name.as_str() {
            "surenav" => {
                let path = cfg.model.as_ref().ok_or_else(|| anyhow!("surenav needs `model`"))?;
                PlannerSpec::Surenav { model: load_model(path)?.model, granularity: cfg.granularity }
            }
            "dstar" => PlannerSpec::DStar(tables.as_ref().expect("tables loaded").0.clone()),
            "coastar" => PlannerSpec::CoaStar(tables.as_ref().expect("tables loaded").1.clone()),
            "rcr" => PlannerSpec::Rcr { risk: risk.clone(), params: cfg.rcr },
            other => bail!("unknown planner {other}"),
        });
    }
    let bcfg = BenchConfig { rho: cfg.rho, max_steps: cfg.max_steps, replan: cfg.replan, ..BenchConfig::default() };
    let report = run_benchmark(&maps, &scenarios, &specs, &bcfg, Some(&cfg.out))?;
    Ok(json!({ "out": cfg.out, "rows": report.rows.len(), "aggregates": report.aggregates }))
}
