use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bench::scenario_truth;
use super::*;
use crate::baselines::{derive_class_order, derive_costs, RcrParams};
use crate::nav::Granularity;
use crate::relax_gnn::{ModelConfig, RelaxModel};
use crate::semantic_map::{urban_labels, Perturbation, Scenario};

const SIDEWALK: u8 = 0;
const ROAD: u8 = 2;
const GRASS: u8 = 5;
const BUILDING: u8 = 7;

fn pt(x: f64, y: f64) -> Point {
    Point::new(x, y)
}

fn filled(w: usize, h: usize, label: u8) -> SemanticGrid {
    SemanticGrid::filled(w, h, 1.0, urban_labels(), label).unwrap()
}

/// Minimum over every monotone coupling of the largest matched distance.
fn brute_frechet(a: &[Point], b: &[Point]) -> f64 {
    fn go(a: &[Point], b: &[Point], i: usize, j: usize, worst: f64) -> f64 {
        let worst = worst.max(a[i].dist(b[j]));
        if i + 1 == a.len() && j + 1 == b.len() {
            return worst;
        }
        let mut best = f64::INFINITY;
        if i + 1 < a.len() {
            best = best.min(go(a, b, i + 1, j, worst));
        }
        if j + 1 < b.len() {
            best = best.min(go(a, b, i, j + 1, worst));
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            best = best.min(go(a, b, i + 1, j + 1, worst));
        }
        best
    }
    go(a, b, 0, 0, 0.0)
}

fn random_points(rng: &mut ChaCha8Rng) -> Vec<Point> {
    (0..rng.gen_range(1..=6)).map(|_| pt(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0))).collect()
}

#[test]
fn frechet_matches_exhaustive_couplings() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..1000 {
        let (a, b) = (random_points(&mut rng), random_points(&mut rng));
        assert_eq!(discrete_frechet(&a, &b).unwrap(), brute_frechet(&a, &b), "pair {k}");
    }
}

#[test]
fn frechet_examples() {
    let a = vec![pt(0.0, 0.0), pt(10.0, 0.0)];
    assert_eq!(frechet(&a, &a, a[0], a[1], 1.0).unwrap(), 0.0);
    let b = vec![pt(0.0, 0.5), pt(10.0, 0.5)];
    assert!((frechet(&a, &b, a[0], a[1], 1.0).unwrap() - 0.05).abs() < 1e-12);
    assert!(matches!(frechet(&a, &b, a[0], a[0], 1.0), Err(MetricError::DegenerateEndpoints)));
    assert!(matches!(frechet(&[], &b, a[0], a[1], 1.0), Err(MetricError::EmptyPolyline)));
}

fn arb_points() -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0).prop_map(|(x, y)| pt(x, y)), 1..7)
}

proptest! {
    #[test]
    fn frechet_is_symmetric(a in arb_points(), b in arb_points()) {
        prop_assert_eq!(discrete_frechet(&a, &b).unwrap(), discrete_frechet(&b, &a).unwrap());
        let (s, g) = (pt(0.0, 0.0), pt(3.0, 4.0));
        prop_assert!((frechet(&a, &b, s, g, 0.5).unwrap() - frechet(&b, &a, s, g, 0.5).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn frechet_triangle_inequality(a in arb_points(), b in arb_points(), c in arb_points()) {
        let ab = discrete_frechet(&a, &b).unwrap();
        let bc = discrete_frechet(&b, &c).unwrap();
        let ac = discrete_frechet(&a, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
    }
}

#[test]
fn relax_iou_examples() {
    assert_eq!(relax_iou(&[1, 2], &[1, 2], 5).unwrap(), 1.0);
    assert_eq!(relax_iou(&[0], &[1], 5).unwrap(), 0.0);
    assert!((relax_iou(&[0, 1], &[1, 2], 5).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(relax_iou(&[], &[], 5).unwrap(), 1.0);
    assert!(matches!(relax_iou(&[7], &[1], 5), Err(MetricError::SegmentationMismatch(7))));
}

#[test]
fn spl_examples() {
    assert_eq!(spl(true, 10.0, 10.0).unwrap(), 1.0);
    assert_eq!(spl(false, 10.0, 10.0).unwrap(), 0.0);
    assert_eq!(spl(true, 20.0, 10.0).unwrap(), 0.5);
    assert!(matches!(spl(true, 1.0, 0.0), Err(MetricError::NoFeasibleShortest)));
}

fn risk_table(entries: &[(&str, f64)]) -> RiskTable {
    RiskTable(entries.iter().map(|(n, r)| (n.to_string(), *r)).collect())
}

#[test]
fn total_risk_examples() {
    let side = filled(12, 3, SIDEWALK);
    let line = vec![pt(0.5, 1.5), pt(10.5, 1.5)];
    assert_eq!(total_risk(&line, &side, &RiskTable::urban_default()), 0.0);

    let grass = filled(12, 3, GRASS);
    let table = risk_table(&[("grass", 0.5)]);
    // cells 0..=9 of row 1
    let ten = vec![pt(0.5, 1.5), pt(9.5, 1.5)];
    assert!((total_risk(&ten, &grass, &table) - 5.0).abs() < 1e-12);
}

#[test]
fn diagonal_steps_count_only_visited_cells() {
    let g = filled(5, 5, SIDEWALK);
    let path = vec![g.center(Cell::new(0, 1)), g.center(Cell::new(1, 0)), g.center(Cell::new(2, 1))];
    assert_eq!(trajectory_cells(&g, &path), vec![Cell::new(0, 1), Cell::new(1, 0), Cell::new(2, 1)]);
}

proptest! {
    #[test]
    fn total_risk_is_additive_at_cell_boundaries(
        labels in prop::collection::vec(0u8..7, 20),
        a in 0.05f64..0.95, cut in 1usize..19, b in 0.05f64..0.95,
        y in 0.1f64..0.9,
    ) {
        let mut g = filled(20, 1, SIDEWALK);
        for (c, &l) in labels.iter().enumerate() {
            g.set_label(Cell::new(c, 0), l);
        }
        let table = RiskTable::urban_default();
        let (x0, xc, x1) = (a, cut as f64, 19.0 + b);
        let whole = total_risk(&[pt(x0, y), pt(x1, y)], &g, &table);
        let left = total_risk(&[pt(x0, y), pt(xc, y)], &g, &table);
        let right = total_risk(&[pt(xc, y), pt(x1, y)], &g, &table);
        prop_assert!((whole - (left + right)).abs() < 1e-9);
    }

    #[test]
    fn detours_never_reduce_risk(labels in prop::collection::vec(0u8..7, 30), k in 1usize..9) {
        let mut g = filled(10, 3, SIDEWALK);
        for (i, &l) in labels.iter().enumerate() {
            g.set_label(Cell::new(i % 10, i / 10), l);
        }
        let table = RiskTable::urban_default();
        let base = vec![pt(0.5, 0.5), pt(9.5, 0.5)];
        let mut detour = vec![pt(0.5, 0.5), pt(k as f64 + 0.5, 0.5), pt(k as f64 + 0.5, 2.5), pt(k as f64 + 0.5, 0.5), pt(9.5, 0.5)];
        prop_assert!(total_risk(&detour, &g, &table) >= total_risk(&base, &g, &table));
        detour.dedup();
    }
}

fn log_with(trajectory: Vec<Point>, reached: bool) -> EpisodeLog {
    EpisodeLog {
        scenario_id: "s".into(),
        planner: "p".into(),
        start: trajectory[0],
        goal: *trajectory.last().unwrap(),
        path_length: crate::geom::polyline_length(&trajectory),
        trajectory,
        steps: Vec::new(),
        plans: Vec::new(),
        reached,
        hard_entries: 0,
        success: reached,
        failed_plans: 0,
    }
}

#[test]
fn success_examples() {
    let mut g = filled(10, 3, SIDEWALK);
    let clean = log_with(vec![pt(0.5, 0.5), pt(9.5, 0.5)], true);
    assert!(success(&clean, &g));
    assert!(!success(&log_with(vec![pt(0.5, 0.5), pt(9.5, 0.5)], false), &g));
    g.set_label(Cell::new(5, 0), BUILDING);
    assert!(!success(&clean, &g));
}

#[test]
fn shortest_feasible_uses_soft_cells() {
    let mut g = filled(10, 3, BUILDING);
    for c in 0..10 {
        g.set_label(Cell::new(c, 1), if c == 5 { GRASS } else { SIDEWALK });
    }
    assert!((shortest_feasible(&g, pt(0.5, 1.5), pt(9.5, 1.5)).unwrap() - 9.0).abs() < 1e-12);
    g.set_label(Cell::new(5, 1), BUILDING);
    assert!(matches!(shortest_feasible(&g, pt(0.5, 1.5), pt(9.5, 1.5)), Err(MetricError::NoFeasibleShortest)));
}

fn flat_model() -> RelaxModel {
    let mut m = RelaxModel::new(ModelConfig { hidden: 8, layers: 1, heads: 2, ..ModelConfig::new(10) }, 0).unwrap();
    m.params_mut().iter_mut().for_each(|p| *p = 0.0);
    m
}

fn bench_world() -> (BTreeMap<String, SemanticGrid>, Vec<Scenario>) {
    let mut g = filled(30, 20, SIDEWALK);
    for r in 0..20 {
        g.set_label(Cell::new(15, r), ROAD);
    }
    let scenario = Scenario {
        id: "s0".into(),
        map_id: "m0".into(),
        start: pt(2.5, 10.5),
        goal: pt(27.5, 10.5),
        perturbations: Vec::new(),
        risk_table: RiskTable::urban_default(),
    };
    let mut s1 = scenario.clone();
    s1.id = "s1".into();
    s1.start = pt(2.5, 2.5);
    (BTreeMap::from([("m0".to_string(), g)]), vec![scenario, s1])
}

fn all_planners() -> Vec<PlannerSpec> {
    let labels = urban_labels();
    let demos = vec![vec![SIDEWALK, ROAD]];
    vec![
        PlannerSpec::Surenav { model: flat_model(), granularity: Granularity::ContinuousUnion },
        PlannerSpec::DStar(derive_costs(&demos, &labels).unwrap()),
        PlannerSpec::CoaStar(derive_class_order(&demos, &labels).unwrap()),
        PlannerSpec::Rcr { risk: RiskTable::urban_default(), params: RcrParams::default() },
    ]
}

#[test]
fn benchmark_row_cardinality() {
    let (maps, scenarios) = bench_world();
    let planners = all_planners();
    let report = run_benchmark(&maps, &scenarios[..1], &planners[..2], &BenchConfig::default(), None).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert_eq!(report.to_csv().unwrap().lines().count(), 3);
    assert_eq!(report.to_csv().unwrap().lines().next().unwrap(), REPORT_COLUMNS.join(","));
}

#[test]
fn all_planners_succeed_on_unperturbed_feasible_map() {
    let (maps, scenarios) = bench_world();
    let report = run_benchmark(&maps, &scenarios, &all_planners(), &BenchConfig::default(), None).unwrap();
    assert_eq!(report.rows.len(), 8);
    for r in &report.rows {
        assert_eq!(r.success, 1, "{r:?}");
        assert!(r.error.is_empty(), "{r:?}");
        assert!((0.0..=1.0).contains(&r.spl));
        assert!(r.relax_iou.is_some_and(|v| (0.0..=1.0).contains(&v)));
    }
    for name in ["surenav", "dstar", "coastar", "rcr"] {
        assert_eq!(report.aggregate_for(name).unwrap().success_rate, 1.0);
    }
    // rows sorted by planner, then scenario
    let keys: Vec<_> = report.rows.iter().map(|r| (r.planner.clone(), r.scenario_id.clone())).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
}

#[test]
fn aggregates_are_row_means() {
    let (maps, scenarios) = bench_world();
    let report = run_benchmark(&maps, &scenarios, &all_planners(), &BenchConfig::default(), None).unwrap();
    for agg in &report.aggregates {
        let rows: Vec<_> = report
            .rows
            .iter()
            .filter(|r| r.planner == agg.planner && agg.map_id.as_ref().map_or(true, |m| *m == r.map_id))
            .collect();
        assert_eq!(agg.episodes, rows.len());
        let n = rows.len() as f64;
        assert!((agg.mean_spl - rows.iter().map(|r| r.spl).sum::<f64>() / n).abs() < 1e-12);
        assert!((agg.mean_total_risk - rows.iter().map(|r| r.total_risk).sum::<f64>() / n).abs() < 1e-12);
        assert!((agg.mean_path_length_m - rows.iter().map(|r| r.path_length_m).sum::<f64>() / n).abs() < 1e-12);
    }
}

#[test]
fn benchmark_files_are_reproducible() {
    let (maps, mut scenarios) = bench_world();
    scenarios[0].perturbations.push(Perturbation { seed_position: pt(10.5, 10.5), radius: 1, new_label: BUILDING });
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        run_benchmark(&maps, &scenarios, &all_planners(), &BenchConfig::default(), Some(d.path())).unwrap();
    }
    for f in ["report.csv", "scatter.csv"] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    assert!(dirs[0].path().join("report.json").exists());
    assert!(dirs[0].path().join("episodes/surenav.s0.episode.json").exists());
}

#[test]
fn perturbed_truth_differs_from_prior() {
    let (maps, mut scenarios) = bench_world();
    scenarios[0].perturbations.push(Perturbation { seed_position: pt(10.5, 10.5), radius: 0, new_label: BUILDING });
    let truth = scenario_truth(&maps["m0"], &scenarios[0], None).unwrap();
    assert_eq!(truth.class(Cell::new(10, 10)), RegionClass::Hard);
    assert_eq!(maps["m0"].class(Cell::new(10, 10)), RegionClass::Free);
}

#[test]
fn unknown_map_is_reported_not_fatal() {
    let (maps, mut scenarios) = bench_world();
    scenarios[1].map_id = "missing".into();
    let report = run_benchmark(&maps, &scenarios, &all_planners()[1..2], &BenchConfig::default(), None).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert!(report.rows.iter().any(|r| r.error.contains("missing")));
}
