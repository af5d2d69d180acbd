//! Constraint-relaxation navigation on superpixel region graphs.

pub mod autodiff;
pub mod baselines;
pub mod geom;
pub mod metrics;
pub mod nav;
pub mod relax_gnn;
pub mod search;
pub mod semantic_map;
pub mod superpixel;
pub mod testkit;
pub mod training;

pub use geom::{Cell, Point};
pub use semantic_map::{LabelInfo, MapError, Perturbation, RegionClass, RiskTable, Scenario, SemanticGrid};
pub use superpixel::{RegionGraph, SegError, Segmentation, SlicParams};
