use std::hint::black_box;
use std::time::{Duration, Instant};

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use relaxnav_bench::{city, long_scenario, model, scenario_graph, train_sample};
use relaxnav_core::baselines::{cell_penalties, CostDerivation, DStarLite, LabelCostTable};
use relaxnav_core::geom::Point;
use relaxnav_core::metrics::discrete_frechet;
use relaxnav_core::nav::{Planner, SurenavPlanner};
use relaxnav_core::search::{default_lambda, default_max_steps, diff_search, grid_search};
use relaxnav_core::superpixel::slic_segment;
use relaxnav_core::training::{default_oracle_costs, evaluate_sample, TrainConfig};
use relaxnav_core::SlicParams;

fn segmentation(c: &mut Criterion) {
    let mut group = c.benchmark_group("slic");
    for size in [48, 96, 192] {
        let g = city(size, 1);
        let params = SlicParams::for_grid(&g);
        group.bench_with_input(BenchmarkId::from_parameter(size), &g, |b, g| b.iter(|| slic_segment(g, &params).unwrap()));
    }
    group.finish();
}

fn search(c: &mut Criterion) {
    let mut group = c.benchmark_group("diff_search");
    for size in [48, 96] {
        let g = city(size, 2);
        let s = long_scenario(&g, 3);
        let graph = scenario_graph(&g, &s);
        let psi = model(32).predict_costs(&graph).unwrap();
        let lambda = default_lambda(&graph);
        group.bench_with_input(BenchmarkId::new("nodes", graph.len()), &graph, |b, graph| {
            b.iter(|| diff_search(graph, black_box(&psi), lambda, default_max_steps(graph.len())).unwrap())
        });
    }
    group.finish();
}

fn training_step(c: &mut Criterion) {
    let g = city(48, 4);
    let s = long_scenario(&g, 5);
    let sample = train_sample(&g, &s);
    let cfg = TrainConfig::default();
    let mut group = c.benchmark_group("forward_backward");
    for hidden in [16, 32, 64] {
        let m = model(hidden);
        group.bench_with_input(BenchmarkId::new("hidden", hidden), &m, |b, m| b.iter(|| evaluate_sample(m, &sample, &cfg).unwrap()));
    }
    group.finish();
}

fn planning(c: &mut Criterion) {
    let g = city(96, 6);
    let s = long_scenario(&g, 7);
    let mut planner = SurenavPlanner::new(model(32));
    c.bench_function("surenav plan 96x96", |b| {
        b.iter_custom(|iters| {
            let mut total = Duration::ZERO;
            for _ in 0..iters {
                planner.reset(&g, s.start, s.goal).unwrap();
                let t = Instant::now();
                black_box(planner.plan(&g, s.start, s.goal).unwrap());
                total += t.elapsed();
            }
            total
        })
    });
}

fn dstar_repair(c: &mut Criterion) {
    let g = city(96, 8);
    let s = long_scenario(&g, 9);
    let table = LabelCostTable { costs: default_oracle_costs(g.label_table()), derivation: CostDerivation::Manual };
    let pen = cell_penalties(&g, &table);
    let (start, goal) = (g.cell_of(s.start).unwrap(), g.cell_of(s.goal).unwrap());
    let mut base = DStarLite::new(g.width(), g.height(), g.resolution(), pen.clone(), start, goal);
    let path = base.path().unwrap();
    let blocked = path[path.len() / 2];

    let mut group = c.benchmark_group("replan 96x96");
    group.bench_function("dstar lite repair", |b| {
        b.iter_batched(
            || base.clone(),
            |mut d| {
                d.update_cells(&[(blocked, f64::INFINITY)]);
                d.cost()
            },
            criterion::BatchSize::SmallInput,
        )
    });
    let mut pen2 = pen.clone();
    pen2[g.index(blocked)] = f64::INFINITY;
    group.bench_function("weighted a* from scratch", |b| {
        b.iter(|| grid_search(g.width(), g.height(), g.resolution(), black_box(&pen2), start, goal).map(|p| p.cost))
    });
    group.finish();
}

fn frechet(c: &mut Criterion) {
    let a: Vec<Point> = (0..200).map(|k| Point::new(k as f64 * 0.5, (k as f64 * 0.1).sin())).collect();
    let b: Vec<Point> = (0..240).map(|k| Point::new(k as f64 * 0.42, (k as f64 * 0.08).cos())).collect();
    c.bench_function("discrete frechet 200x240", |bench| bench.iter(|| discrete_frechet(black_box(&a), black_box(&b)).unwrap()));
}

criterion_group!(benches, segmentation, search, training_step, planning, dstar_repair, frechet);
criterion_main!(benches);
