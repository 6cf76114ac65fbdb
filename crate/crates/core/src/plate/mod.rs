//! Plate model: material and geometry, thickness damage, the finite-difference
//! bending operators, and the modal eigensolve.

mod band;
mod beam;
mod eigen;
mod operators;

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{Grid, GridField};

pub use band::{BandCholesky, BandMatrix};
pub use beam::{analytic_beam_basis, beam_root, clamped_beam_mode};
pub use eigen::{lowest_modes, EigenOptions, ModeSet};
pub use operators::{assemble_operators, PlateOperators};

use crate::modal::{ModalBasis, DEFAULT_ENERGY_SHARES};

/// Which pair of opposite edges is clamped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum ClampedEdges {
    /// Edges `x = 0` and `x = side`; bending runs along x.
    XEdges,
    /// Edges `y = 0` and `y = side`.
    YEdges,
}

/// Treatment of the two unclamped edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum OtherEdges {
    Free,
    SimplySupported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlateSpec {
    pub side_length: f64,
    pub thickness: f64,
    pub youngs_modulus: f64,
    pub poisson: f64,
    pub density: f64,
    pub grid_n: usize,
    pub clamped_edges: ClampedEdges,
    pub other_edges: OtherEdges,
}

impl Default for PlateSpec {
    fn default() -> Self {
        Self {
            side_length: 1.0,
            thickness: 0.003,
            youngs_modulus: 2.1e11,
            poisson: 0.3,
            // S235JR; not given with the structure, fixed here.
            density: 7850.0,
            grid_n: 101,
            clamped_edges: ClampedEdges::XEdges,
            other_edges: OtherEdges::Free,
        }
    }
}

impl PlateSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.thickness > 0.0) {
            return invalid(format!("thickness must be positive, got {}", self.thickness));
        }
        if !(self.poisson > 0.0 && self.poisson < 0.5) {
            return invalid(format!("Poisson ratio must lie in (0, 0.5), got {}", self.poisson));
        }
        if !(self.youngs_modulus > 0.0 && self.density > 0.0 && self.side_length > 0.0) {
            return invalid("modulus, density and side length must be positive");
        }
        if self.grid_n < 21 {
            return invalid(format!("grid_n must be at least 21, got {}", self.grid_n));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid_n, self.side_length)
    }

    /// Flexural rigidity `E t³ / (12 (1 - ν²))` for thickness `t`.
    pub fn rigidity(&self, t: f64) -> f64 {
        self.youngs_modulus * t.powi(3) / (12.0 * (1.0 - self.poisson * self.poisson))
    }

    pub fn uniform_thickness(&self) -> Result<ThicknessMap> {
        self.validate()?;
        let grid = self.grid()?;
        Ok(ThicknessMap {
            nominal: self.thickness,
            field: GridField::new(grid, vec![self.thickness; grid.len()])?,
        })
    }
}

/// Per-node thickness, meters. Each node stands for one `h × h` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThicknessMap {
    pub nominal: f64,
    pub field: GridField,
}

impl ThicknessMap {
    pub fn grid(&self) -> Grid {
        self.field.grid
    }

    pub fn validate(&self) -> Result<()> {
        for (k, &t) in self.field.values.iter().enumerate() {
            if !(t > 0.0 && t <= self.nominal * (1.0 + 1e-12)) {
                return invalid(format!("thickness {t} at node {k} outside (0, {}]", self.nominal));
            }
        }
        Ok(())
    }

    /// Uniformly scaled copy (nominal scales too).
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.nominal *= factor;
        out.field.values.iter_mut().for_each(|t| *t *= factor);
        out
    }
}

/// A connected patch of cells with uniform thickness removal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DamageRegion {
    /// Node indices on the plate grid, sorted and unique.
    pub cells: Vec<usize>,
    /// Thickness removed, meters.
    pub depth: f64,
}

impl DamageRegion {
    pub fn new(mut cells: Vec<usize>, depth: f64) -> Self {
        cells.sort_unstable();
        cells.dedup();
        Self { cells, depth }
    }

    /// Axis-aligned block of `nx × ny` cells with lower-left corner `(i0, j0)`.
    pub fn block(grid: &Grid, i0: usize, j0: usize, nx: usize, ny: usize, depth: f64) -> Result<Self> {
        if i0 + nx > grid.n || j0 + ny > grid.n || nx == 0 || ny == 0 {
            return invalid("damage block outside the grid");
        }
        let cells = (j0..j0 + ny)
            .flat_map(|j| (i0..i0 + nx).map(move |i| (i, j)))
            .map(|(i, j)| grid.index(i, j))
            .collect();
        Ok(Self::new(cells, depth))
    }

    /// Surface area in mm².
    pub fn area_mm2(&self, grid: &Grid) -> f64 {
        let h_mm = grid.spacing() * 1000.0;
        self.cells.len() as f64 * h_mm * h_mm
    }

    pub fn is_connected(&self, grid: &Grid) -> bool {
        let Some(&start) = self.cells.first() else {
            return false;
        };
        let members: BTreeSet<usize> = self.cells.iter().copied().collect();
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            for nb in neighbors4(grid, c) {
                if members.contains(&nb) && seen.insert(nb) {
                    queue.push_back(nb);
                }
            }
        }
        seen.len() == members.len()
    }

    pub fn mask(&self, grid: &Grid) -> Vec<bool> {
        let mut m = vec![false; grid.len()];
        self.cells.iter().for_each(|&c| m[c] = true);
        m
    }
}

pub(crate) fn neighbors4(grid: &Grid, idx: usize) -> impl Iterator<Item = usize> {
    let (i, j) = grid.coords(idx);
    let n = grid.n;
    let grid = *grid;
    [
        (i > 0).then(|| (i - 1, j)),
        (i + 1 < n).then(|| (i + 1, j)),
        (j > 0).then(|| (i, j - 1)),
        (j + 1 < n).then(|| (i, j + 1)),
    ]
    .into_iter()
    .flatten()
    .map(move |(a, b)| grid.index(a, b))
}

/// Removes each region's depth from its member cells.
pub fn apply_damage(t: &ThicknessMap, regions: &[DamageRegion]) -> Result<ThicknessMap> {
    let grid = t.grid();
    let mut used = vec![false; grid.len()];
    let mut out = t.clone();
    for (r, region) in regions.iter().enumerate() {
        if !(region.depth >= 0.0) {
            return invalid(format!("region {r} has negative depth"));
        }
        for &c in &region.cells {
            if c >= grid.len() {
                return invalid(format!("region {r} cell {c} outside the grid"));
            }
            if used[c] {
                return invalid(format!("region {r} overlaps another region at cell {c}"));
            }
            used[c] = true;
            out.field.values[c] -= region.depth;
        }
    }
    out.validate()?;
    Ok(out)
}

/// Reference frequencies and shapes the computed modes are matched against.
///
/// Lowest eigenpairs come back in frequency order; the retained pair is the
/// one most similar (by MAC) to the first and third clamped-beam modes, which
/// skips the antisymmetric and torsional modes in between.
pub fn solve_modes(ops: &PlateOperators, n_modes: usize, opts: &EigenOptions) -> Result<ModalBasis> {
    if n_modes < 2 {
        return invalid("n_modes must be at least 2");
    }
    let set = lowest_modes(ops, n_modes, opts)?;
    let reference = analytic_beam_basis(&ops.spec)?;
    ModalBasis::select_dominant(&set, &reference, &DEFAULT_ENERGY_SHARES)
}
