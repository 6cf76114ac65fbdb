//! Regular square grids over the plate and scalar fields living on them.
//!
//! Node `(i, j)` sits at `(i * h, j * h)`. The `i` axis is the clamped axis
//! (x), the `j` axis runs along the free edges (y). Storage is x-fastest:
//! `index = j * n + i`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A point on the plate surface, meters.
pub type Point = [f64; 2];

pub fn distance(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    /// Nodes per axis.
    pub n: usize,
    /// Side length, meters.
    pub side: f64,
}

impl Grid {
    pub fn new(n: usize, side: f64) -> Result<Self> {
        if n < 3 {
            return invalid(format!("grid needs at least 3 nodes per axis, got {n}"));
        }
        if !(side > 0.0 && side.is_finite()) {
            return invalid(format!("grid side must be positive, got {side}"));
        }
        Ok(Self { n, side })
    }

    /// Grid with the given node spacing; the side must be a whole number of steps.
    pub fn with_spacing(side: f64, spacing: f64) -> Result<Self> {
        let steps = side / spacing;
        let rounded = steps.round();
        if (steps - rounded).abs() > 1e-9 || rounded < 2.0 {
            return invalid(format!("spacing {spacing} does not divide side {side}"));
        }
        Self::new(rounded as usize + 1, side)
    }

    pub fn spacing(&self) -> f64 {
        self.side / (self.n - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.n, idx / self.n)
    }

    pub fn point(&self, i: usize, j: usize) -> Point {
        let h = self.spacing();
        [i as f64 * h, j as f64 * h]
    }

    pub fn points(&self) -> Vec<Point> {
        (0..self.len())
            .map(|idx| {
                let (i, j) = self.coords(idx);
                self.point(i, j)
            })
            .collect()
    }

    pub fn contains(&self, p: Point) -> bool {
        p.iter().all(|&c| (0.0..=self.side).contains(&c))
    }

    /// Index of the node nearest the plate center.
    pub fn center_index(&self) -> usize {
        let c = (self.n - 1) / 2;
        self.index(c, c)
    }
}

/// Scalar values on every node of a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> f64) -> Self {
        let values = grid.points().into_iter().map(f).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Scale to unit Euclidean norm over the nodes. A zero field is left as is.
    pub fn normalized(mut self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= n);
        }
        self
    }

    /// Bilinear interpolation. Exact at nodes.
    pub fn interpolate(&self, p: Point) -> Result<f64> {
        if !self.grid.contains(p) || !p.iter().all(|c| c.is_finite()) {
            return invalid(format!("position ({}, {}) outside the plate", p[0], p[1]));
        }
        let h = self.grid.spacing();
        let last = self.grid.n - 1;
        let locate = |c: f64| {
            let s = c / h;
            let s = if (s - s.round()).abs() < 1e-9 { s.round() } else { s };
            let k = (s.floor() as usize).min(last - 1);
            (k, s - k as f64)
        };
        let (i, fx) = locate(p[0]);
        let (j, fy) = locate(p[1]);
        let v00 = self.at(i, j);
        let v10 = self.at(i + 1, j);
        let v01 = self.at(i, j + 1);
        let v11 = self.at(i + 1, j + 1);
        Ok(v00 * (1.0 - fx) * (1.0 - fy) + v10 * fx * (1.0 - fy) + v01 * (1.0 - fx) * fy + v11 * fx * fy)
    }

    /// Mirror about the plate's `x = side/2` axis.
    pub fn mirrored_x(&self) -> Self {
        let n = self.grid.n;
        let mut out = self.clone();
        for j in 0..n {
            for i in 0..n {
                out.values[self.grid.index(i, j)] = self.at(n - 1 - i, j);
            }
        }
        out
    }

    /// CSV with one grid row (constant `j`) per line.
    pub fn to_csv(&self) -> String {
        let n = self.grid.n;
        let mut s = String::with_capacity(n * n * 24);
        for j in 0..n {
            let row: Vec<String> = (0..n).map(|i| format!("{:.12e}", self.at(i, j))).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Modal assurance criterion between two real shapes.
pub fn mac(a: &[f64], b: &[f64]) -> f64 {
    let ab: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let aa: f64 = a.iter().map(|x| x * x).sum();
    let bb: f64 = b.iter().map(|x| x * x).sum();
    if aa == 0.0 || bb == 0.0 {
        return 0.0;
    }
    ab * ab / (aa * bb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spacing_at_defaults_is_ten_millimeters() {
        let g = Grid::new(101, 1.0).unwrap();
        assert!((g.spacing() - 0.01).abs() < 1e-15);
        assert_eq!(Grid::with_spacing(1.0, 0.01).unwrap().n, 101);
        assert!(Grid::with_spacing(1.0, 0.03).is_err());
    }

    #[test]
    fn interpolation_is_exact_at_nodes() {
        let g = Grid::new(11, 1.0).unwrap();
        let f = GridField::from_fn(g, |p| (3.0 * p[0]).sin() + p[1] * p[1]);
        for idx in [0, 5, 17, 60, 120] {
            let (i, j) = g.coords(idx);
            let v = f.interpolate(g.point(i, j)).unwrap();
            assert_eq!(v, f.values[idx]);
        }
        assert!(f.interpolate([1.01, 0.5]).is_err());
    }

    #[test]
    fn interpolation_reproduces_bilinear_fields() {
        let g = Grid::new(6, 1.0).unwrap();
        let f = GridField::from_fn(g, |p| 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[1]);
        let p = [0.33, 0.71];
        let expect = 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[1];
        assert!((f.interpolate(p).unwrap() - expect).abs() < 1e-13);
    }

    #[test]
    fn mac_is_scale_and_sign_invariant() {
        let a = [1.0, 2.0, -1.0];
        let b = [-3.0, -6.0, 3.0];
        assert!((mac(&a, &b) - 1.0).abs() < 1e-15);
        assert_eq!(mac(&a, &[0.0; 3]), 0.0);
    }
}
