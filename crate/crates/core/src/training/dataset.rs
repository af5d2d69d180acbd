//! Synthetic demonstration datasets: city maps, semi-static scenarios with a
//! blockage on the expert's usual route, and expert routes on the blocked map.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{oracle_expert, TrainError};
use crate::semantic_map::synth::{city_map, CityParams};
use crate::semantic_map::{perturbed_grid, sample_route_perturbation, sample_scenarios, RiskTable, Scenario, SemanticGrid};
use crate::superpixel::{slic_segment, SlicParams};
use crate::training::Demonstration;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub maps: usize,
    pub size: usize,
    pub crosswalk_prob: f64,
    pub train_per_map: usize,
    pub held_out_per_map: usize,
    /// Start-goal distance bounds as fractions of the map side.
    pub min_dist: f64,
    pub max_dist: f64,
    /// Hop radius of the blockage placed on the expert route.
    pub radius: u32,
    /// Label written by the blockage.
    pub block_label: u8,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            maps: 5,
            size: 48,
            crosswalk_prob: 0.5,
            train_per_map: 24,
            held_out_per_map: 4,
            min_dist: 0.3,
            max_dist: 0.9,
            radius: 1,
            block_label: 9,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub maps: BTreeMap<String, SemanticGrid>,
    pub train: Vec<(Scenario, Demonstration)>,
    pub held_out: Vec<(Scenario, Demonstration)>,
}

impl SynthDataset {
    pub fn scenarios(&self) -> Vec<Scenario> {
        self.train.iter().chain(&self.held_out).map(|(s, _)| s.clone()).collect()
    }
}

/// One blocked scenario per sampled start/goal pair: the blockage sits on the
/// expert's route over the unperturbed map and the demonstration is the
/// expert's route after it. Pairs whose blockage cannot be placed or leaves
/// no route are skipped, so the counts are upper bounds.
pub fn synth_dataset(spec: &DatasetSpec, cost_table: &[f64]) -> Result<SynthDataset, TrainError> {
    let mut out = SynthDataset { maps: BTreeMap::new(), train: Vec::new(), held_out: Vec::new() };
    let per_map = spec.train_per_map + spec.held_out_per_map;
    for m in 0..spec.maps {
        let map_seed = spec.seed.wrapping_mul(1000).wrapping_add(m as u64);
        let params = CityParams { width: spec.size, height: spec.size, crosswalk_prob: spec.crosswalk_prob, ..CityParams::default() };
        let grid = city_map(&params, map_seed);
        let map_id = format!("city{m:02}");
        let seg = slic_segment(&grid, &SlicParams::for_grid(&grid))?;
        let side = spec.size as f64 * grid.resolution();
        let pairs = sample_scenarios(&grid, &map_id, per_map, spec.min_dist * side, spec.max_dist * side, map_seed ^ 0x5eed)?;
        for (k, mut s) in pairs.into_iter().enumerate() {
            s.risk_table = RiskTable::urban_default();
            let route = match oracle_expert(&grid, &s, cost_table) {
                Ok(d) => d.polyline,
                Err(TrainError::NoPath) => continue,
                Err(e) => return Err(e),
            };
            let Ok(block) = sample_route_perturbation(&grid, &seg, &route, spec.radius, spec.block_label, map_seed ^ k as u64) else {
                continue;
            };
            s.perturbations.push(block);
            let truth = perturbed_grid(&grid, &seg, &s.perturbations, Some(0))?;
            let mut demo = match oracle_expert(&truth, &s, cost_table) {
                Ok(d) => d,
                Err(TrainError::NoPath) => continue,
                Err(e) => return Err(e),
            };
            demo.perturbation_index = Some(0);
            if k < spec.train_per_map {
                out.train.push((s, demo));
            } else {
                out.held_out.push((s, demo));
            }
        }
        out.maps.insert(map_id, grid);
    }
    Ok(out)
}
