//! JSON exports of segmentations (`*.seg.json`) and graphs (`*.graph.json`).

use serde::{Deserialize, Serialize};

use super::{RegionGraph, SegError, Segmentation, NONE};
use crate::geom::Point;
use crate::semantic_map::{RegionClass, SemanticGrid};

/// Run-length encoded segmentation. Each run is `[region, count]` in row-major
/// order; hard cells use region `-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationFile {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub n_regions: usize,
    pub spacing: f64,
    pub compactness: f64,
    pub max_iters: usize,
    pub runs: Vec<[i64; 2]>,
}

impl SegmentationFile {
    pub fn from_segmentation(seg: &Segmentation) -> Self {
        let mut runs: Vec<[i64; 2]> = Vec::new();
        for &a in seg.assignment() {
            let id = if a == NONE { -1 } else { i64::from(a) };
            match runs.last_mut() {
                Some(run) if run[0] == id => run[1] += 1,
                _ => runs.push([id, 1]),
            }
        }
        let (compactness, max_iters) = seg.slic_settings();
        Self {
            width: seg.width(),
            height: seg.height(),
            resolution: seg.resolution(),
            n_regions: seg.n_regions(),
            spacing: seg.spacing(),
            compactness,
            max_iters,
            runs,
        }
    }

    /// Rebuilds the segmentation and checks it against `grid`.
    pub fn to_segmentation(&self, grid: &SemanticGrid) -> Result<Segmentation, SegError> {
        if self.width != grid.width() || self.height != grid.height() {
            return Err(SegError::DimensionMismatch);
        }
        let mut regions = vec![Vec::new(); self.n_regions];
        let mut idx = 0usize;
        for &[id, count] in &self.runs {
            if count < 0 {
                return Err(SegError::InvalidParam("negative run length".into()));
            }
            let count = count as usize;
            if idx + count > grid.len() {
                return Err(SegError::InvalidParam("runs exceed grid size".into()));
            }
            if id >= 0 {
                let r = regions
                    .get_mut(id as usize)
                    .ok_or(SegError::UnknownRegion(id as usize))?;
                r.extend(idx..idx + count);
            }
            idx += count;
        }
        if idx != grid.len() {
            return Err(SegError::InvalidParam("runs do not cover the grid".into()));
        }
        if regions.iter().any(Vec::is_empty) {
            return Err(SegError::InvalidParam("empty region in segmentation file".into()));
        }
        for r in &mut regions {
            r.sort_unstable();
        }
        let seg = Segmentation::from_regions(grid, regions, self.spacing, self.compactness, self.max_iters);
        seg.validate(grid).map_err(SegError::InvalidParam)?;
        Ok(seg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNodeRecord {
    pub id: usize,
    pub centroid: Point,
    pub label: u8,
    pub label_name: String,
    pub class: RegionClass,
    pub is_start: bool,
    pub is_goal: bool,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphEdgeRecord {
    pub i: usize,
    pub j: usize,
    pub weight: f64,
    pub affinity: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    /// Absent for graphs built without endpoints.
    pub start: Option<Point>,
    pub goal: Option<Point>,
    pub tau: u32,
    pub nodes: Vec<GraphNodeRecord>,
    pub edges: Vec<GraphEdgeRecord>,
}

impl GraphFile {
    pub fn from_graph(graph: &RegionGraph, grid: &SemanticGrid) -> Self {
        Self {
            start: graph.start_node().map(|_| graph.start()),
            goal: graph.goal_node().map(|_| graph.goal()),
            tau: graph.tau(),
            nodes: graph
                .nodes
                .iter()
                .map(|n| GraphNodeRecord {
                    id: n.id,
                    centroid: n.centroid,
                    label: n.label,
                    label_name: grid.label_name(n.label).to_owned(),
                    class: n.class,
                    is_start: n.is_start,
                    is_goal: n.is_goal,
                    cells: n.cell_count,
                })
                .collect(),
            edges: graph
                .edges
                .iter()
                .map(|e| GraphEdgeRecord { i: e.i, j: e.j, weight: e.weight, affinity: e.affinity })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Cell;
    use crate::semantic_map::urban_labels;
    use crate::superpixel::{build_graph, slic_segment, SlicParams};

    #[test]
    fn segmentation_round_trips_through_json() {
        let mut g = SemanticGrid::filled(12, 8, 1.0, urban_labels(), 0).unwrap();
        for row in 0..8 {
            g.set_label(Cell::new(5, row), 7);
            g.set_label(Cell::new(9, row), 5);
        }
        let seg = slic_segment(&g, &SlicParams { target_n: 6, compactness: 10.0, max_iters: 10 }).unwrap();
        let file = SegmentationFile::from_segmentation(&seg);
        let text = serde_json::to_string(&file).unwrap();
        let back: SegmentationFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_segmentation(&g).unwrap(), seg);
        let total: i64 = file.runs.iter().map(|r| r[1]).sum();
        assert_eq!(total, 96);
    }

    #[test]
    fn truncated_runs_are_rejected() {
        let g = SemanticGrid::filled(4, 4, 1.0, urban_labels(), 0).unwrap();
        let seg = slic_segment(&g, &SlicParams { target_n: 1, compactness: 10.0, max_iters: 10 }).unwrap();
        let mut file = SegmentationFile::from_segmentation(&seg);
        file.runs[0][1] -= 1;
        assert!(file.to_segmentation(&g).is_err());
    }

    #[test]
    fn graph_file_lists_nodes_and_edges() {
        let g = SemanticGrid::filled(10, 10, 1.0, urban_labels(), 0).unwrap();
        let seg = slic_segment(&g, &SlicParams { target_n: 4, compactness: 10.0, max_iters: 10 }).unwrap();
        let graph = build_graph(&g, &seg, Point::new(0.5, 0.5), Point::new(9.5, 9.5), 1).unwrap();
        let file = GraphFile::from_graph(&graph, &g);
        assert_eq!(file.nodes.len(), 4);
        assert_eq!(file.edges.len(), 4);
        assert_eq!(file.nodes[0].label_name, "sidewalk");
        let v: serde_json::Value = serde_json::to_value(&file).unwrap();
        assert_eq!(v["nodes"][0]["class"], "free");
        assert!(v["nodes"][0]["centroid"].is_array());
    }
}
