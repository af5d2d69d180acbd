//! Labeled rasters with free/soft/hard region classes, the SMAP file format,
//! scenarios, and semi-static perturbations.

mod io;
mod perturb;
mod scenario;
pub mod synth;

pub use io::{decode_map, encode_map, load_map, save_map, MAGIC};
pub use perturb::{apply_perturbation, perturbation_regions, perturbed_grid, sample_route_perturbation};
pub use scenario::{
    load_risk_table, load_scenarios, sample_scenarios, save_risk_table, save_scenarios,
    Perturbation, RiskTable, Scenario, DEFAULT_D_MAX, DEFAULT_D_MIN,
};

use serde::{Deserialize, Serialize};

use crate::geom::{Cell, Point};

/// Default raster resolution in meters per cell.
pub const DEFAULT_RESOLUTION: f32 = 0.5;

#[derive(Debug, thiserror::Error)]
pub enum MapError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed map file: {0}")]
    Format(String),
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("cell ({col}, {row}) is out of bounds")]
    OutOfBounds { col: usize, row: usize },
    #[error("perturbation seed ({x}, {y}) is outside the map")]
    SeedOutOfBounds { x: f64, y: f64 },
    #[error("perturbation seed ({x}, {y}) lies on a hard region")]
    SeedOnHardRegion { x: f64, y: f64 },
    #[error("no admissible start/goal pair found")]
    Infeasible,
    #[error("segmentation does not match the grid")]
    SegmentationMismatch,
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Constraint class of a region. Encoded as 0/1/2 in map files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionClass {
    Free,
    Soft,
    Hard,
}

impl RegionClass {
    pub fn code(self) -> u8 {
        match self {
            RegionClass::Free => 0,
            RegionClass::Soft => 1,
            RegionClass::Hard => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(RegionClass::Free),
            1 => Some(RegionClass::Soft),
            2 => Some(RegionClass::Hard),
            _ => None,
        }
    }

    pub fn is_traversable(self) -> bool {
        self != RegionClass::Hard
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelInfo {
    pub name: String,
    pub class: RegionClass,
}

impl LabelInfo {
    pub fn new(name: impl Into<String>, class: RegionClass) -> Self {
        Self { name: name.into(), class }
    }
}

/// Label table used by the synthetic urban maps. The last entry is the hard
/// label that perturbations write by default.
pub fn urban_labels() -> Vec<LabelInfo> {
    use RegionClass::*;
    vec![
        LabelInfo::new("sidewalk", Free),
        LabelInfo::new("crosswalk", Soft),
        LabelInfo::new("road", Soft),
        LabelInfo::new("living_street", Soft),
        LabelInfo::new("parking_lot", Soft),
        LabelInfo::new("grass", Soft),
        LabelInfo::new("rough_terrain", Soft),
        LabelInfo::new("building", Hard),
        LabelInfo::new("water", Hard),
        LabelInfo::new("blocked", Hard),
    ]
}

/// Row-major raster of label indices with a label table.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticGrid {
    width: usize,
    height: usize,
    resolution: f32,
    labels: Vec<u8>,
    label_table: Vec<LabelInfo>,
}

impl SemanticGrid {
    pub fn new(
        width: usize,
        height: usize,
        resolution: f32,
        labels: Vec<u8>,
        label_table: Vec<LabelInfo>,
    ) -> Result<Self, MapError> {
        if width == 0 || height == 0 {
            return Err(MapError::Invalid("grid must be non-empty".into()));
        }
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(MapError::Invalid(format!("resolution {resolution} must be positive")));
        }
        if label_table.is_empty() || label_table.len() > 255 {
            return Err(MapError::Invalid(format!(
                "label table must hold 1..=255 entries, got {}",
                label_table.len()
            )));
        }
        if labels.len() != width * height {
            return Err(MapError::Invalid(format!(
                "{} labels for a {width}x{height} grid",
                labels.len()
            )));
        }
        let m = label_table.len();
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= m) {
            return Err(MapError::Invalid(format!("label index {bad} >= {m}")));
        }
        Ok(Self { width, height, resolution, labels, label_table })
    }

    /// A grid where every cell carries `label`.
    pub fn filled(
        width: usize,
        height: usize,
        resolution: f32,
        label_table: Vec<LabelInfo>,
        label: u8,
    ) -> Result<Self, MapError> {
        Self::new(width, height, resolution, vec![label; width * height], label_table)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn resolution(&self) -> f64 {
        self.resolution as f64
    }

    pub fn resolution_f32(&self) -> f32 {
        self.resolution
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label_table(&self) -> &[LabelInfo] {
        &self.label_table
    }

    pub fn label_count(&self) -> usize {
        self.label_table.len()
    }

    pub fn label_index(&self, name: &str) -> Option<u8> {
        self.label_table.iter().position(|l| l.name == name).map(|i| i as u8)
    }

    pub fn label_name(&self, label: u8) -> &str {
        &self.label_table[label as usize].name
    }

    pub fn class_of_label(&self, label: u8) -> RegionClass {
        self.label_table[label as usize].class
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.col < self.width && cell.row < self.height
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    pub fn label(&self, cell: Cell) -> u8 {
        self.labels[self.index(cell)]
    }

    pub fn label_at_index(&self, index: usize) -> u8 {
        self.labels[index]
    }

    pub fn class(&self, cell: Cell) -> RegionClass {
        self.class_of_label(self.label(cell))
    }

    pub fn class_at_index(&self, index: usize) -> RegionClass {
        self.class_of_label(self.labels[index])
    }

    /// Region class of a cell, checking bounds.
    pub fn region_class_of(&self, cell: Cell) -> Result<RegionClass, MapError> {
        if !self.in_bounds(cell) {
            return Err(MapError::OutOfBounds { col: cell.col, row: cell.row });
        }
        Ok(self.class(cell))
    }

    pub fn set_label(&mut self, cell: Cell, label: u8) {
        assert!((label as usize) < self.label_table.len(), "label out of range");
        let i = self.index(cell);
        self.labels[i] = label;
    }

    /// Cell containing a metric point, if inside the map.
    pub fn cell_of(&self, p: Point) -> Option<Cell> {
        let r = self.resolution();
        if !(p.x >= 0.0 && p.y >= 0.0) {
            return None;
        }
        let col = (p.x / r).floor() as usize;
        let row = (p.y / r).floor() as usize;
        let cell = Cell::new(col, row);
        self.in_bounds(cell).then_some(cell)
    }

    /// Metric center of a cell.
    pub fn center(&self, cell: Cell) -> Point {
        let r = self.resolution();
        Point::new((cell.col as f64 + 0.5) * r, (cell.row as f64 + 0.5) * r)
    }

    pub fn diagonal(&self) -> f64 {
        let r = self.resolution();
        (self.width as f64 * r).hypot(self.height as f64 * r)
    }

    /// Counts of (free, soft, hard) cells.
    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        for &l in &self.labels {
            counts[self.class_of_label(l).code() as usize] += 1;
        }
        counts
    }

    #[cfg(test)]
    pub(crate) fn neighbors4(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        crate::geom::MOVES4.iter().filter_map(move |&(dc, dr)| {
            let c = cell.col.checked_add_signed(dc)?;
            let r = cell.row.checked_add_signed(dr)?;
            let n = Cell::new(c, r);
            self.in_bounds(n).then_some(n)
        })
    }

    /// Indices of cells whose label differs from `other`. Panics on dimension mismatch.
    pub fn changed_cells(&self, other: &SemanticGrid) -> Vec<usize> {
        assert_eq!((self.width, self.height), (other.width, other.height));
        self.labels
            .iter()
            .zip(&other.labels)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn same_shape(&self, other: &SemanticGrid) -> bool {
        self.width == other.width && self.height == other.height
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_with(names: &[(&str, RegionClass)]) -> SemanticGrid {
        let table = names.iter().map(|(n, c)| LabelInfo::new(*n, *c)).collect::<Vec<_>>();
        let labels = (0..names.len() as u8).collect::<Vec<_>>();
        SemanticGrid::new(names.len(), 1, 1.0, labels, table).unwrap()
    }

    #[test]
    fn region_classes_follow_label_table() {
        let g = grid_with(&[
            ("building", RegionClass::Hard),
            ("sidewalk", RegionClass::Free),
            ("grass", RegionClass::Soft),
        ]);
        assert_eq!(g.region_class_of(Cell::new(0, 0)).unwrap(), RegionClass::Hard);
        assert_eq!(g.region_class_of(Cell::new(1, 0)).unwrap(), RegionClass::Free);
        assert_eq!(g.region_class_of(Cell::new(2, 0)).unwrap(), RegionClass::Soft);
        assert!(matches!(
            g.region_class_of(Cell::new(3, 0)),
            Err(MapError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn urban_table_classes() {
        let table = urban_labels();
        let class = |n: &str| table.iter().find(|l| l.name == n).unwrap().class;
        assert_eq!(class("sidewalk"), RegionClass::Free);
        assert_eq!(class("grass"), RegionClass::Soft);
        assert_eq!(class("crosswalk"), RegionClass::Soft);
        assert_eq!(class("building"), RegionClass::Hard);
        assert_eq!(class("water"), RegionClass::Hard);
    }

    #[test]
    fn rejects_label_outside_table() {
        let err = SemanticGrid::new(2, 1, 1.0, vec![0, 3], urban_labels()[..2].to_vec());
        assert!(matches!(err, Err(MapError::Invalid(_))));
    }

    #[test]
    fn class_counts_cover_grid() {
        let g = grid_with(&[
            ("a", RegionClass::Hard),
            ("b", RegionClass::Free),
            ("c", RegionClass::Soft),
            ("d", RegionClass::Soft),
        ]);
        let c = g.class_counts();
        assert_eq!(c, [1, 2, 1]);
        assert_eq!(c.iter().sum::<usize>(), g.len());
    }

    #[test]
    fn point_cell_round_trip() {
        let g = SemanticGrid::filled(4, 3, 0.5, urban_labels(), 0).unwrap();
        let c = Cell::new(3, 2);
        assert_eq!(g.cell_of(g.center(c)), Some(c));
        assert_eq!(g.cell_of(Point::new(2.0, 0.1)), None);
        assert_eq!(g.cell_of(Point::new(-0.1, 0.1)), None);
    }
}
