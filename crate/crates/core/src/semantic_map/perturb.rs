use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{MapError, Perturbation, SemanticGrid};
use crate::geom::{resample, Point};
use crate::superpixel::Segmentation;

/// Superpixels relabeled by `p`: the one under the seed plus everything within
/// `radius` hops, sorted by id.
pub fn perturbation_regions(
    grid: &SemanticGrid,
    seg: &Segmentation,
    p: &Perturbation,
) -> Result<Vec<usize>, MapError> {
    if !seg.matches(grid) {
        return Err(MapError::SegmentationMismatch);
    }
    let (x, y) = (p.seed_position.x, p.seed_position.y);
    let cell = grid.cell_of(p.seed_position).ok_or(MapError::SeedOutOfBounds { x, y })?;
    let seed = seg
        .region_at(grid.index(cell))
        .ok_or(MapError::SeedOnHardRegion { x, y })?;
    Ok(seg.regions_within_hops(seed, p.radius))
}

/// Returns a copy of `grid` with the perturbed superpixels set to `p.new_label`.
pub fn apply_perturbation(
    grid: &SemanticGrid,
    seg: &Segmentation,
    p: &Perturbation,
) -> Result<SemanticGrid, MapError> {
    if p.new_label as usize >= grid.label_count() {
        return Err(MapError::Invalid(format!("label {} out of range", p.new_label)));
    }
    let regions = perturbation_regions(grid, seg, p)?;
    let mut out = grid.clone();
    for r in regions {
        for &c in seg.region_cells(r) {
            out.set_label(grid.cell_at(c), p.new_label);
        }
    }
    Ok(out)
}

/// Applies `perturbations[0..=k]` in order for `upto = Some(k)`; `None` leaves
/// the grid as is. Regions come from the base segmentation.
pub fn perturbed_grid(
    grid: &SemanticGrid,
    seg: &Segmentation,
    perturbations: &[Perturbation],
    upto: Option<usize>,
) -> Result<SemanticGrid, MapError> {
    let Some(k) = upto else {
        return Ok(grid.clone());
    };
    if k >= perturbations.len() {
        return Err(MapError::Invalid(format!("perturbation index {k} out of range")));
    }
    let mut out = grid.clone();
    for p in &perturbations[..=k] {
        out = apply_perturbation(&out, seg, p)?;
    }
    Ok(out)
}

/// Samples a perturbation seeded on a random point of `route` whose affected
/// superpixels avoid those holding the route's endpoints.
pub fn sample_route_perturbation(
    grid: &SemanticGrid,
    seg: &Segmentation,
    route: &[Point],
    radius: u32,
    new_label: u8,
    rng_seed: u64,
) -> Result<Perturbation, MapError> {
    let (Some(&first), Some(&last)) = (route.first(), route.last()) else {
        return Err(MapError::Infeasible);
    };
    let ends = [seg.region_of_point(first), seg.region_of_point(last)];
    let candidates: Vec<Point> = resample(route, grid.resolution())
        .into_iter()
        .filter(|&q| {
            let p = Perturbation { seed_position: q, radius, new_label };
            match perturbation_regions(grid, seg, &p) {
                Ok(regions) => regions.iter().all(|r| !ends.contains(&Some(*r))),
                Err(_) => false,
            }
        })
        .collect();
    if candidates.is_empty() {
        return Err(MapError::Infeasible);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let seed_position = candidates[rng.gen_range(0..candidates.len())];
    Ok(Perturbation { seed_position, radius, new_label })
}
