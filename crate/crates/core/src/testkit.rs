//! Random inputs shared by tests, acceptance checks and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::Point;
use crate::semantic_map::{urban_labels, RegionClass};
use crate::superpixel::{Edge, RegionGraph, RegionNode};

/// Labels of the urban table used for random nodes: sidewalk, then soft labels.
const FREE_LABEL: u8 = 0;
const SOFT_LABELS: [u8; 4] = [1, 2, 4, 5];

/// Connected random geometric graph with centroid-distance weights. Node 0 is
/// the start, node `n - 1` the goal.
pub fn random_graph(seed: u64, n: usize, soft_prob: f64) -> RegionGraph {
    assert!(n >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = 10.0 * (n as f64).sqrt();
    let pts: Vec<Point> = (0..n)
        .map(|_| Point::new(rng.gen_range(0.0..side), rng.gen_range(0.0..side)))
        .collect();
    let table = urban_labels();
    let nodes: Vec<RegionNode> = (0..n)
        .map(|id| {
            let label = if rng.gen_bool(soft_prob) {
                SOFT_LABELS[rng.gen_range(0..SOFT_LABELS.len())]
            } else {
                FREE_LABEL
            };
            RegionNode {
                id,
                centroid: pts[id],
                label,
                class: table[label as usize].class,
                is_start: id == 0,
                is_goal: id == n - 1,
                cell_count: 1,
            }
        })
        .collect();
    let mut pairs = std::collections::BTreeSet::new();
    // spanning tree: each node links to its nearest earlier node
    for i in 1..n {
        let j = (0..i).min_by(|&a, &b| pts[i].dist(pts[a]).total_cmp(&pts[i].dist(pts[b]))).unwrap();
        pairs.insert((j, i));
    }
    // extra short-range edges
    for i in 0..n {
        for j in i + 1..n {
            if pts[i].dist(pts[j]) < 0.35 * side / (n as f64).sqrt() * 3.0 && rng.gen_bool(0.5) {
                pairs.insert((i, j));
            }
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(i, j)| Edge { i, j, weight: pts[i].dist(pts[j]).max(1e-6), affinity: 1 })
        .collect();
    let diag = side * std::f64::consts::SQRT_2;
    RegionGraph::from_parts(nodes, edges, table.len(), pts[0], pts[n - 1], diag)
}

/// Nonnegative relaxation costs that are zero on free nodes.
pub fn random_psi(seed: u64, graph: &RegionGraph, scale: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    graph
        .nodes
        .iter()
        .map(|n| if n.class == RegionClass::Soft { rng.gen_range(0.0..scale) } else { 0.0 })
        .collect()
}

/// Relabels nodes so that old node `i` becomes node `perm[i]`.
pub fn permute_graph(graph: &RegionGraph, perm: &[usize]) -> RegionGraph {
    assert_eq!(perm.len(), graph.len());
    let mut nodes = graph.nodes.clone();
    for (i, node) in graph.nodes.iter().enumerate() {
        nodes[perm[i]] = RegionNode { id: perm[i], ..node.clone() };
    }
    let edges = graph
        .edges
        .iter()
        .rev()
        .map(|e| Edge { i: perm[e.i], j: perm[e.j], ..e.clone() })
        .collect();
    RegionGraph::from_parts(nodes, edges, graph.label_count(), graph.start(), graph.goal(), graph.diagonal())
}

/// Seeded random permutation of `0..n`.
pub fn random_permutation(seed: u64, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    p
}
