use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{MapError, RegionClass, SemanticGrid};
use crate::geom::Point;

pub const DEFAULT_D_MIN: f64 = 30.0;
pub const DEFAULT_D_MAX: f64 = 200.0;

/// Attempts per requested scenario before giving up.
const RETRIES_PER_SCENARIO: usize = 10_000;

/// Relabels the superpixel under `seed_position` and every superpixel within
/// `radius` adjacency hops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    pub seed_position: Point,
    pub radius: u32,
    pub new_label: u8,
}

/// Unit risk per label name, each in `[0, 1]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RiskTable(pub BTreeMap<String, f64>);

impl RiskTable {
    pub fn validate(&self) -> Result<(), MapError> {
        for (name, &r) in &self.0 {
            if !(0.0..=1.0).contains(&r) {
                return Err(MapError::Invalid(format!("risk for {name} must be in [0,1], got {r}")));
            }
        }
        Ok(())
    }

    /// Risk of a label name; unknown labels carry zero risk.
    pub fn risk(&self, name: &str) -> f64 {
        self.0.get(name).copied().unwrap_or(0.0)
    }

    /// Per-label-index risk vector for `grid`'s label table.
    pub fn per_label(&self, grid: &SemanticGrid) -> Vec<f64> {
        grid.label_table().iter().map(|l| self.risk(&l.name)).collect()
    }

    /// A reasonable default for the urban label set.
    pub fn urban_default() -> Self {
        let entries = [
            ("sidewalk", 0.0),
            ("crosswalk", 0.15),
            ("living_street", 0.35),
            ("parking_lot", 0.4),
            ("grass", 0.45),
            ("rough_terrain", 0.6),
            ("road", 0.9),
            ("building", 1.0),
            ("water", 1.0),
            ("blocked", 1.0),
        ];
        RiskTable(entries.iter().map(|(n, r)| (n.to_string(), *r)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub map_id: String,
    pub start: Point,
    pub goal: Point,
    #[serde(default)]
    pub perturbations: Vec<Perturbation>,
    #[serde(default)]
    pub risk_table: RiskTable,
}

/// Samples `n` start/goal pairs on free cells with `d_min <= |start - goal| <= d_max`.
/// Positions are cell centers. The result depends only on the arguments.
pub fn sample_scenarios(
    grid: &SemanticGrid,
    map_id: &str,
    n: usize,
    d_min: f64,
    d_max: f64,
    rng_seed: u64,
) -> Result<Vec<Scenario>, MapError> {
    let free: Vec<usize> = (0..grid.len())
        .filter(|&i| grid.class_at_index(i) == RegionClass::Free)
        .collect();
    if free.len() < 2 {
        return Err(MapError::Infeasible);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let mut found = None;
        for _ in 0..RETRIES_PER_SCENARIO {
            let a = grid.center(grid.cell_at(free[rng.gen_range(0..free.len())]));
            let b = grid.center(grid.cell_at(free[rng.gen_range(0..free.len())]));
            let d = a.dist(b);
            if d >= d_min && d <= d_max && d > 0.0 {
                found = Some((a, b));
                break;
            }
        }
        let (start, goal) = found.ok_or(MapError::Infeasible)?;
        out.push(Scenario {
            id: format!("{map_id}-s{k:03}"),
            map_id: map_id.to_owned(),
            start,
            goal,
            perturbations: Vec::new(),
            risk_table: RiskTable::default(),
        });
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScenarioFile {
    Many(Vec<Scenario>),
    One(Box<Scenario>),
}

/// Reads a `*.scenario.json` file holding one scenario or an array of them.
pub fn load_scenarios(path: impl AsRef<Path>) -> Result<Vec<Scenario>, MapError> {
    let text = fs::read_to_string(path)?;
    Ok(match serde_json::from_str::<ScenarioFile>(&text)? {
        ScenarioFile::Many(v) => v,
        ScenarioFile::One(s) => vec![*s],
    })
}

pub fn save_scenarios(scenarios: &[Scenario], path: impl AsRef<Path>) -> Result<(), MapError> {
    fs::write(path, serde_json::to_string_pretty(scenarios)?)?;
    Ok(())
}

pub fn load_risk_table(path: impl AsRef<Path>) -> Result<RiskTable, MapError> {
    let table: RiskTable = serde_json::from_str(&fs::read_to_string(path)?)?;
    table.validate()?;
    Ok(table)
}

pub fn save_risk_table(table: &RiskTable, path: impl AsRef<Path>) -> Result<(), MapError> {
    fs::write(path, serde_json::to_string_pretty(table)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantic_map::synth::{city_map, CityParams};
    use crate::semantic_map::urban_labels;

    #[test]
    fn single_free_cell_is_infeasible() {
        let mut g = SemanticGrid::filled(5, 5, 1.0, urban_labels(), 7).unwrap();
        g.set_label(crate::geom::Cell::new(2, 2), 0);
        assert!(matches!(
            sample_scenarios(&g, "m", 1, 0.0, 10.0, 1),
            Err(MapError::Infeasible)
        ));
    }

    #[test]
    fn sampling_is_deterministic_and_respects_distance_band() {
        let g = city_map(&CityParams::default(), 3);
        let a = sample_scenarios(&g, "city", 100, 30.0, 60.0, 11).unwrap();
        let b = sample_scenarios(&g, "city", 100, 30.0, 60.0, 11).unwrap();
        assert_eq!(a, b);
        for s in &a {
            let d = s.start.dist(s.goal);
            assert!((30.0..=60.0).contains(&d), "distance {d}");
            for p in [s.start, s.goal] {
                assert_eq!(g.class(g.cell_of(p).unwrap()), RegionClass::Free);
            }
        }
    }

    #[test]
    fn risk_table_rejects_out_of_range() {
        let mut t = RiskTable::urban_default();
        assert!(t.validate().is_ok());
        t.0.insert("lava".into(), 1.5);
        assert!(t.validate().is_err());
    }

    #[test]
    fn scenario_files_accept_single_or_list() {
        let dir = tempfile::tempdir().unwrap();
        let s = Scenario {
            id: "a".into(),
            map_id: "m".into(),
            start: Point::new(1.0, 2.0),
            goal: Point::new(3.0, 4.0),
            perturbations: vec![Perturbation {
                seed_position: Point::new(2.0, 2.0),
                radius: 1,
                new_label: 9,
            }],
            risk_table: RiskTable::urban_default(),
        };
        let p = dir.path().join("one.scenario.json");
        fs::write(&p, serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(load_scenarios(&p).unwrap(), vec![s.clone()]);
        let p = dir.path().join("many.scenario.json");
        save_scenarios(&[s.clone(), s.clone()], &p).unwrap();
        assert_eq!(load_scenarios(&p).unwrap().len(), 2);
    }
}
