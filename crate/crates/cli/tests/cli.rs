use std::fs;
use std::path::Path;
use std::process::Command;

use relaxnav_cli::commands::*;
use relaxnav_core::geom::Cell;
use relaxnav_core::nav::EpisodeLog;
use relaxnav_core::semantic_map::{load_map, save_map, urban_labels};
use relaxnav_core::superpixel::GraphFile;
use relaxnav_core::training::load_demos;
use relaxnav_core::{Point, SemanticGrid};

fn dataset_args(out: &Path) -> DatasetArgs {
    DatasetArgs { maps: 1, size: 32, crosswalk_prob: 0.5, train_per_map: 4, held_out_per_map: 2, radius: 1, seed: 3, out: out.to_path_buf() }
}

fn train_args(dataset: &Path, out: &Path) -> TrainArgs {
    TrainArgs {
        dataset: dataset.to_path_buf(),
        epochs: 2,
        lr: 1e-3,
        batch_size: 2,
        wfp: 0.3,
        wfn: 0.7,
        gamma: 1.0,
        lambda_scale: 1.0,
        clip_norm: 5.0,
        seed: 7,
        hidden: 8,
        layers: 1,
        heads: 2,
        out: out.to_path_buf(),
    }
}

#[test]
fn segment_toy_map_gives_four_regions() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("toy.smap");
    save_map(&SemanticGrid::filled(10, 10, 1.0, urban_labels(), 0).unwrap(), &map).unwrap();
    let args = SegmentArgs { map, n: Some(4), compactness: 10.0, max_iters: 10, tau: 1, start: None, goal: None, out: dir.path().join("toy") };
    let summary = segment(&args).unwrap();
    assert_eq!(summary["nodes"], 4);
    let graph: GraphFile = serde_json::from_str(&fs::read_to_string(dir.path().join("toy.graph.json")).unwrap()).unwrap();
    assert_eq!(graph.nodes.len(), 4);
    assert!(graph.start.is_none());
    assert!(graph.nodes.iter().all(|n| n.cells == 25));
    assert!(dir.path().join("toy.seg.json").exists());

    let anchored = SegmentArgs { start: Some(Point::new(0.5, 0.5)), goal: Some(Point::new(9.5, 9.5)), ..args };
    segment(&anchored).unwrap();
    let graph: GraphFile = serde_json::from_str(&fs::read_to_string(dir.path().join("toy.graph.json")).unwrap()).unwrap();
    assert_eq!(graph.start, Some(Point::new(0.5, 0.5)));
    assert_eq!(graph.nodes.iter().filter(|n| n.is_start || n.is_goal).count(), 2);
}

#[test]
fn oracle_reproduces_dataset_demonstrations() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dataset(&dataset_args(dir.path())).unwrap();
    assert!(summary["train"].as_u64().unwrap() > 0);
    let out = dir.path().join("again.ndjson");
    let args = OracleArgs { maps: Some(dir.path().join("maps")), map: None, scenarios: dir.path().join("heldout.json"), cost_table: None, out: out.clone() };
    oracle(&args).unwrap();
    assert_eq!(fs::read(&out).unwrap(), fs::read(dir.path().join("heldout_demos.ndjson")).unwrap());
}

#[test]
fn training_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    dataset(&dataset_args(dir.path())).unwrap();
    let a = dir.path().join("a.ckpt");
    let b = dir.path().join("b.ckpt");
    train(&train_args(dir.path(), &a)).unwrap();
    train(&train_args(dir.path(), &b)).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let mut other = train_args(dir.path(), &dir.path().join("c.ckpt"));
    other.seed = 8;
    train(&other).unwrap();
    assert_ne!(fs::read(&a).unwrap(), fs::read(dir.path().join("c.ckpt")).unwrap());
    assert!(dir.path().join("a.ckpt.history.json").exists());
}

#[test]
fn bench_single_planner_single_scenario() {
    let dir = tempfile::tempdir().unwrap();
    dataset(&DatasetArgs { held_out_per_map: 1, ..dataset_args(dir.path()) }).unwrap();
    let config = serde_json::json!({
        "maps": "maps",
        "scenarios": "heldout.json",
        "planners": ["rcr"],
        "out": "bench",
    });
    fs::write(dir.path().join("bench.json"), config.to_string()).unwrap();
    let summary = bench(&BenchArgs { config: dir.path().join("bench.json") }).unwrap();
    assert_eq!(summary["rows"], 1);
    let csv = fs::read_to_string(dir.path().join("bench/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn bench_rejects_unknown_fields_and_planners() {
    let dir = tempfile::tempdir().unwrap();
    dataset(&dataset_args(dir.path())).unwrap();
    let write = |v: serde_json::Value| {
        fs::write(dir.path().join("bench.json"), v.to_string()).unwrap();
        bench(&BenchArgs { config: dir.path().join("bench.json") })
    };
    assert!(write(serde_json::json!({"maps": "maps", "scenarios": "heldout.json", "out": "b", "typo": 1})).is_err());
    assert!(write(serde_json::json!({"maps": "maps", "scenarios": "heldout.json", "out": "b", "planners": ["astar"]})).is_err());
    assert!(write(serde_json::json!({"maps": "maps", "scenarios": "heldout.json", "out": "b", "planners": ["dstar"]})).is_err());
}

#[test]
fn plan_and_simulate_with_trained_model() {
    let dir = tempfile::tempdir().unwrap();
    dataset(&dataset_args(dir.path())).unwrap();
    let model = dir.path().join("m.ckpt");
    train(&train_args(dir.path(), &model)).unwrap();
    let map = dir.path().join("maps/city00.smap");
    let scenario = dir.path().join("heldout.json");

    let plan_args = PlanArgs {
        map: map.clone(),
        model: model.clone(),
        scenario: scenario.clone(),
        id: None,
        granularity: GranularityArg::ContinuousUnion,
        scale: 2,
        out: dir.path().join("p"),
    };
    let summary = plan(&plan_args).unwrap();
    assert!(summary["waypoints"].as_u64().unwrap() >= 2);
    let png = fs::read(dir.path().join("p.png")).unwrap();
    assert_eq!(&png[1..4], b"PNG");

    let sim_args = SimulateArgs {
        prior: map,
        truth: None,
        events: None,
        model,
        scenario,
        id: None,
        rho: 20.0,
        max_steps: None,
        replan: ReplanArg::OnChange,
        granularity: GranularityArg::ContinuousUnion,
        out: dir.path().join("e.episode.json"),
    };
    let summary = simulate(&sim_args).unwrap();
    assert_eq!(summary["reached"], true);
    let log = EpisodeLog::load(dir.path().join("e.episode.json")).unwrap();
    assert!(log.success);
}

#[test]
fn perturb_at_explicit_seed() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("m.smap");
    save_map(&SemanticGrid::filled(10, 10, 1.0, urban_labels(), 0).unwrap(), &map).unwrap();
    let args = PerturbArgs {
        map,
        seg: None,
        seeds: vec![Point::new(5.5, 5.5)],
        route: None,
        count: 1,
        radius: 0,
        label: "grass".into(),
        rng: 0,
        out: dir.path().join("out.smap"),
    };
    let summary = perturb(&args).unwrap();
    assert!(summary["changed_cells"].as_u64().unwrap() > 0);
    let out = load_map(dir.path().join("out.smap")).unwrap();
    assert_eq!(out.label(Cell::new(5, 5)), 5);
    assert!(dir.path().join("out.smap.perturbations.json").exists());
    assert!(perturb(&PerturbArgs { label: "lava".into(), ..args }).is_err());
}

#[test]
fn perturb_along_route() {
    let dir = tempfile::tempdir().unwrap();
    dataset(&dataset_args(dir.path())).unwrap();
    let map = dir.path().join("maps/city00.smap");
    let demos = load_demos(dir.path().join("demos.ndjson")).unwrap();
    let args = PerturbArgs {
        map: map.clone(),
        seg: None,
        seeds: Vec::new(),
        route: Some(dir.path().join("demos.ndjson")),
        count: 2,
        radius: 0,
        label: "blocked".into(),
        rng: 1,
        out: dir.path().join("blocked.smap"),
    };
    perturb(&args).unwrap();
    let list: Vec<relaxnav_core::Perturbation> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("blocked.smap.perturbations.json")).unwrap()).unwrap();
    assert_eq!(list.len(), 2);
    let base = load_map(&map).unwrap();
    let route_cells = relaxnav_core::metrics::trajectory_cells(&base, &demos[0].polyline);
    for p in &list {
        assert!(route_cells.contains(&base.cell_of(p.seed_position).unwrap()));
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_relaxnav"))
}

#[test]
fn binary_rejects_unknown_flags() {
    let out = bin().args(["gen-map", "--out", "x.smap", "--bogus"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn binary_reports_errors_as_json() {
    let out = bin().args(["segment", "/nonexistent/map.smap", "--out", "/tmp/x"]).output().unwrap();
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("map.smap") || err["error"].is_string());
}

#[test]
fn binary_gen_map_prints_summary() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.smap");
    let out = bin().args(["gen-map", "--size", "32", "--seed", "1", "--out"]).arg(&path).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["width"], 32);
    assert_eq!(load_map(&path).unwrap().width(), 32);
}
