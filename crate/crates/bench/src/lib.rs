//! Fixed inputs for the criterion benches.

use relaxnav_core::relax_gnn::{ModelConfig, RelaxModel};
use relaxnav_core::semantic_map::synth::{city_map, CityParams};
use relaxnav_core::semantic_map::sample_scenarios;
use relaxnav_core::superpixel::{build_graph, slic_segment, DEFAULT_TAU};
use relaxnav_core::training::{default_oracle_costs, oracle_expert, prepare_sample, TrainSample};
use relaxnav_core::{RegionGraph, Scenario, SemanticGrid, SlicParams};

pub fn city(size: usize, seed: u64) -> SemanticGrid {
    let params = CityParams { width: size, height: size, crosswalk_prob: 0.5, ..CityParams::default() };
    city_map(&params, seed)
}

/// A start/goal pair spanning most of the map.
pub fn long_scenario(grid: &SemanticGrid, seed: u64) -> Scenario {
    let side = grid.width() as f64 * grid.resolution();
    sample_scenarios(grid, "bench", 1, 0.6 * side, 1.2 * side, seed).expect("scenario").remove(0)
}

pub fn scenario_graph(grid: &SemanticGrid, scenario: &Scenario) -> RegionGraph {
    let seg = slic_segment(grid, &SlicParams::for_grid(grid)).expect("segmentation");
    build_graph(grid, &seg, scenario.start, scenario.goal, DEFAULT_TAU).expect("graph")
}

pub fn model(hidden: usize) -> RelaxModel {
    RelaxModel::new(ModelConfig { hidden, ..ModelConfig::new(10) }, 0).expect("model")
}

/// One oracle demonstration projected onto its graph.
pub fn train_sample(grid: &SemanticGrid, scenario: &Scenario) -> TrainSample {
    let costs = default_oracle_costs(grid.label_table());
    let demo = oracle_expert(grid, scenario, &costs).expect("oracle route");
    prepare_sample(grid, scenario, &demo, &SlicParams::for_grid(grid)).expect("sample")
}
