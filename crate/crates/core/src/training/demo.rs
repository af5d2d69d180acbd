use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::geom::Point;
use crate::search::grid_search;
use crate::semantic_map::{LabelInfo, RegionClass, Scenario, SemanticGrid};
use crate::superpixel::{RegionGraph, SegError, Segmentation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemoSource {
    Human,
    Oracle,
}

/// A demonstrated route. The projected fields are filled by [`project_demo`]
/// and are not serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub scenario_id: String,
    pub source: DemoSource,
    pub polyline: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation_index: Option<usize>,
    #[serde(skip)]
    pub region_sequence: Vec<usize>,
    /// 1.0 for each soft region the route passes through.
    #[serde(skip)]
    pub relaxed_truth: Vec<f64>,
}

impl Demonstration {
    pub fn new(scenario_id: impl Into<String>, source: DemoSource, polyline: Vec<Point>) -> Self {
        Self {
            scenario_id: scenario_id.into(),
            source,
            polyline,
            perturbation_index: None,
            region_sequence: Vec::new(),
            relaxed_truth: Vec::new(),
        }
    }
}

/// One JSON record per line; blank lines are skipped.
pub fn load_demos(path: impl AsRef<Path>) -> Result<Vec<Demonstration>, TrainError> {
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let demo = serde_json::from_str(&line).map_err(|e| TrainError::Format(format!("line {}: {e}", k + 1)))?;
        out.push(demo);
    }
    Ok(out)
}

pub fn demo_to_line(demo: &Demonstration) -> String {
    serde_json::to_string(demo).expect("demonstrations always serialize")
}

pub fn save_demos(path: impl AsRef<Path>, demos: &[Demonstration]) -> Result<(), TrainError> {
    let mut s = String::new();
    for d in demos {
        s.push_str(&demo_to_line(d));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn append_demo(path: impl AsRef<Path>, demo: &Demonstration) -> Result<(), TrainError> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{}", demo_to_line(demo))?;
    Ok(())
}

/// Region sequence of the polyline and the soft regions on it.
pub fn project_demo(demo: &Demonstration, seg: &Segmentation, graph: &RegionGraph) -> Result<Demonstration, TrainError> {
    let seq = seg.project_path(&demo.polyline).map_err(|e| match e {
        SegError::PointOnHard { x, y } | SegError::PointOutOfBounds { x, y } => TrainError::PointOnHard { x, y },
        other => TrainError::Segmentation(other),
    })?;
    if seg.n_regions() != graph.len() {
        return Err(TrainError::Segmentation(SegError::DimensionMismatch));
    }
    let mut truth = vec![0.0; graph.len()];
    for &r in &seq {
        if graph.nodes[r].class == RegionClass::Soft {
            truth[r] = 1.0;
        }
    }
    Ok(Demonstration { region_sequence: seq, relaxed_truth: truth, ..demo.clone() })
}

/// Per-meter penalties an expert attaches to each urban label. Hard labels and
/// unknown names are impassable.
pub fn default_oracle_costs(labels: &[LabelInfo]) -> Vec<f64> {
    labels
        .iter()
        .map(|l| match (l.class, l.name.as_str()) {
            (RegionClass::Hard, _) => f64::INFINITY,
            (RegionClass::Free, _) => 0.0,
            (_, "crosswalk") => 0.3,
            (_, "parking_lot") => 1.0,
            (_, "living_street") => 1.5,
            (_, "grass") => 2.0,
            (_, "rough_terrain") => 4.0,
            (_, "road") => 6.0,
            _ => 3.0,
        })
        .collect()
}

/// Grid route minimizing length plus per-meter label penalties. Hard cells are
/// never entered regardless of `cost_table`.
pub fn oracle_expert(grid: &SemanticGrid, scenario: &Scenario, cost_table: &[f64]) -> Result<Demonstration, TrainError> {
    if cost_table.len() != grid.label_count() {
        return Err(TrainError::LengthMismatch { expected: grid.label_count(), got: cost_table.len() });
    }
    let penalties: Vec<f64> = (0..grid.len())
        .map(|i| {
            if grid.class_at_index(i) == RegionClass::Hard {
                f64::INFINITY
            } else {
                cost_table[grid.label_at_index(i) as usize]
            }
        })
        .collect();
    let s = grid.cell_of(scenario.start).ok_or(TrainError::NoPath)?;
    let t = grid.cell_of(scenario.goal).ok_or(TrainError::NoPath)?;
    let path = grid_search(grid.width(), grid.height(), grid.resolution(), &penalties, s, t)
        .map_err(|_| TrainError::NoPath)?;
    let n = path.cells.len();
    let mut polyline = vec![scenario.start];
    polyline.extend(path.cells.iter().skip(1).take(n.saturating_sub(2)).map(|&c| grid.center(c)));
    polyline.push(scenario.goal);
    Ok(Demonstration::new(scenario.id.clone(), DemoSource::Oracle, polyline))
}
