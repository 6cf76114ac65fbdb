//! Random damage scenarios.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::plate::{neighbors4, DamageRegion};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioParams {
    /// Inclusive range of the damage count.
    pub count: (usize, usize),
    /// Surface area range, mm².
    pub area_mm2: (f64, f64),
    /// Thickness removal range, m.
    pub depth: (f64, f64),
    pub max_attempts: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self { count: (1, 3), area_mm2: (2500.0, 25_000.0), depth: (0.0005, 0.001), max_attempts: 100 }
    }
}

/// Cells needed to cover `area_mm2` on `grid`.
pub fn cells_for_area(grid: &Grid, area_mm2: f64) -> usize {
    let cell = (grid.spacing() * 1000.0).powi(2);
    ((area_mm2 / cell).round() as usize).max(1)
}

/// Grows one 4-connected region of `size` cells avoiding `taken`. Returns
/// `None` when the growth front runs dry.
fn grow(grid: &Grid, size: usize, taken: &[bool], r: &mut impl Rng) -> Option<Vec<usize>> {
    let start = r.random_range(0..grid.len());
    if taken[start] {
        return None;
    }
    let mut region = vec![start];
    let mut members = BTreeSet::from([start]);
    let mut front: BTreeSet<usize> = neighbors4(grid, start).filter(|c| !taken[*c]).collect();
    while region.len() < size {
        let options: Vec<usize> = front.iter().copied().collect();
        let &next = options.choose(r)?;
        front.remove(&next);
        members.insert(next);
        region.push(next);
        for nb in neighbors4(grid, next) {
            if !taken[nb] && !members.contains(&nb) {
                front.insert(nb);
            }
        }
    }
    Some(region)
}

/// Damage count, areas and depths drawn from `params`; each region grown
/// from a random start cell by adding random free neighbours.
pub fn generate_scenario(grid: &Grid, params: &ScenarioParams, seed: u64) -> Result<Vec<DamageRegion>> {
    let (lo, hi) = params.count;
    if lo == 0 || hi < lo {
        return invalid("damage count range must be non-empty and start at 1 or more");
    }
    if !(params.area_mm2.0 > 0.0 && params.area_mm2.1 >= params.area_mm2.0) {
        return invalid("area range must be positive and ordered");
    }
    if !(params.depth.0 > 0.0 && params.depth.1 >= params.depth.0) {
        return invalid("depth range must be positive and ordered");
    }
    for attempt in 0..params.max_attempts.max(1) {
        let mut r = rng::stream(seed, "scenario", &[attempt as u64]);
        let count = r.random_range(lo..=hi);
        let mut taken = vec![false; grid.len()];
        let mut regions = Vec::with_capacity(count);
        for _ in 0..count {
            let area = r.random_range(params.area_mm2.0..=params.area_mm2.1);
            let depth = r.random_range(params.depth.0..=params.depth.1);
            let Some(cells) = grow(grid, cells_for_area(grid, area), &taken, &mut r) else {
                break;
            };
            cells.iter().for_each(|&c| taken[c] = true);
            regions.push(DamageRegion::new(cells, depth));
        }
        if regions.len() == count {
            return Ok(regions);
        }
    }
    Err(Error::RetryBudget { attempts: params.max_attempts })
}
