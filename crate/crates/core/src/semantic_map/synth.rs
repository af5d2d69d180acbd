//! Synthetic city maps: a street lattice with sidewalks and crosswalks around
//! blocks filled with buildings, parks, or parking lots.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{urban_labels, SemanticGrid};
use crate::geom::Cell;

const SIDEWALK: u8 = 0;
const CROSSWALK: u8 = 1;
const ROAD: u8 = 2;
const LIVING_STREET: u8 = 3;
const PARKING: u8 = 4;
const GRASS: u8 = 5;
const ROUGH: u8 = 6;
const BUILDING: u8 = 7;
const WATER: u8 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct CityParams {
    pub width: usize,
    pub height: usize,
    pub resolution: f32,
    /// Street period in cells.
    pub block: usize,
    pub road_width: usize,
    pub sidewalk_width: usize,
    /// Probability that a block is a park rather than built up.
    pub park_prob: f64,
    pub parking_prob: f64,
    /// Probability that a block edge street is a living street instead of a road.
    pub living_street_prob: f64,
    /// Probability that a street crossing at an intersection is marked as a
    /// crosswalk; unmarked crossings keep the street label.
    pub crosswalk_prob: f64,
}

impl Default for CityParams {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            resolution: 1.0,
            block: 16,
            road_width: 4,
            sidewalk_width: 2,
            park_prob: 0.35,
            parking_prob: 0.2,
            living_street_prob: 0.15,
            crosswalk_prob: 1.0,
        }
    }
}

#[derive(Clone, Copy)]
enum Band {
    Road,
    Sidewalk,
    Interior,
}

fn band(pos: usize, p: &CityParams) -> Band {
    let k = pos % p.block;
    if k < p.road_width {
        Band::Road
    } else if k < p.road_width + p.sidewalk_width || k >= p.block - p.sidewalk_width {
        Band::Sidewalk
    } else {
        Band::Interior
    }
}

/// Generates a city map. The result depends only on `params` and `seed`.
pub fn city_map(params: &CityParams, seed: u64) -> SemanticGrid {
    let p = params;
    assert!(p.block > p.road_width + 2 * p.sidewalk_width, "block too small");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (p.width, p.height);
    let mut labels = vec![SIDEWALK; w * h];

    let nbx = w.div_ceil(p.block);
    let nby = h.div_ceil(p.block);
    // street kind per lattice line
    let vstreet: Vec<u8> = (0..nbx)
        .map(|_| if rng.gen_bool(p.living_street_prob) { LIVING_STREET } else { ROAD })
        .collect();
    let hstreet: Vec<u8> = (0..nby)
        .map(|_| if rng.gen_bool(p.living_street_prob) { LIVING_STREET } else { ROAD })
        .collect();

    #[derive(Clone, Copy)]
    enum Block {
        Building,
        Park,
        Parking,
        Pond,
    }
    let blocks: Vec<Block> = (0..nbx * nby)
        .map(|_| {
            let u: f64 = rng.gen();
            if u < p.park_prob {
                if rng.gen_bool(0.15) {
                    Block::Pond
                } else {
                    Block::Park
                }
            } else if u < p.park_prob + p.parking_prob {
                Block::Parking
            } else {
                Block::Building
            }
        })
        .collect();
    // per-block park path orientation and building setback
    let extras: Vec<(bool, usize)> = (0..nbx * nby).map(|_| (rng.gen_bool(0.5), rng.gen_range(1..=2))).collect();

    // crossing marks per block, street orientation and block side
    let marked: Vec<bool> = if p.crosswalk_prob < 1.0 {
        (0..nbx * nby * 4).map(|_| rng.gen_bool(p.crosswalk_prob)).collect()
    } else {
        vec![true; nbx * nby * 4]
    };
    let side = |k: usize| usize::from(k % p.block >= p.block / 2);

    let inner_lo = p.road_width + p.sidewalk_width;
    let inner_hi = p.block - p.sidewalk_width;
    for row in 0..h {
        for col in 0..w {
            let (bx, by) = (col / p.block, row / p.block);
            let label = match (band(col, p), band(row, p)) {
                (Band::Road, Band::Road) => vstreet[bx].max(hstreet[by]).min(ROAD),
                (Band::Road, Band::Sidewalk) => {
                    if marked[((by * nbx + bx) * 2) * 2 + side(row)] {
                        CROSSWALK
                    } else {
                        vstreet[bx]
                    }
                }
                (Band::Sidewalk, Band::Road) => {
                    if marked[((by * nbx + bx) * 2 + 1) * 2 + side(col)] {
                        CROSSWALK
                    } else {
                        hstreet[by]
                    }
                }
                (Band::Road, Band::Interior) => vstreet[bx],
                (Band::Interior, Band::Road) => hstreet[by],
                (Band::Sidewalk, _) | (_, Band::Sidewalk) => SIDEWALK,
                (Band::Interior, Band::Interior) => {
                    let b = by * nbx + bx;
                    let (kx, ky) = (col % p.block, row % p.block);
                    let (horizontal, setback) = extras[b];
                    let mid = (inner_lo + inner_hi) / 2;
                    match blocks[b] {
                        Block::Building => {
                            let inside = |k: usize| k >= inner_lo + setback && k < inner_hi - setback;
                            if inside(kx) && inside(ky) {
                                BUILDING
                            } else {
                                GRASS
                            }
                        }
                        Block::Park => {
                            let on_path = if horizontal { ky == mid } else { kx == mid };
                            if on_path {
                                SIDEWALK
                            } else if (kx + ky + b) % 7 == 0 && rng.gen_bool(0.3) {
                                ROUGH
                            } else {
                                GRASS
                            }
                        }
                        Block::Parking => PARKING,
                        Block::Pond => {
                            let inside = |k: usize| k >= inner_lo + 2 && k < inner_hi - 2;
                            if inside(kx) && inside(ky) {
                                WATER
                            } else {
                                GRASS
                            }
                        }
                    }
                }
            };
            labels[row * w + col] = label;
        }
    }
    let mut grid = SemanticGrid::new(w, h, p.resolution, labels, urban_labels()).expect("valid synthetic grid");
    // keep the map border walkable so every sidewalk is connected
    for col in 0..w {
        for row in [0, h - 1] {
            relabel_border(&mut grid, Cell::new(col, row));
        }
    }
    for row in 0..h {
        for col in [0, w - 1] {
            relabel_border(&mut grid, Cell::new(col, row));
        }
    }
    grid
}

fn relabel_border(grid: &mut SemanticGrid, cell: Cell) {
    if !grid.class(cell).is_traversable() {
        grid.set_label(cell, GRASS);
    }
}
