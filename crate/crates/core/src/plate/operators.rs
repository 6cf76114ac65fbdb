//! Energy-consistent finite-difference bending operators.
//!
//! The discrete strain energy sums, over nodes (trapezoid weights), the
//! isotropic bending density `D[(1-ν)(κxx² + κyy²) + ν(κxx + κyy)²]` and,
//! over cell centers, the twist term `2(1-ν) D κxy²`. Stiffness is the
//! Hessian of that quadratic form, so it is symmetric positive definite once
//! the clamped edges are fixed, and the free-edge conditions fall out as
//! natural boundary conditions. Mass is lumped: `ρ t` times the node's
//! trapezoid area.

use crate::error::{invalid, Result};
use crate::grid::{Grid, GridField};

use super::band::BandMatrix;
use super::{ClampedEdges, OtherEdges, PlateSpec, ThicknessMap};

/// Discrete stiffness and mass on the free degrees of freedom.
#[derive(Debug, Clone)]
pub struct PlateOperators {
    pub spec: PlateSpec,
    pub grid: Grid,
    /// Grid node index of each degree of freedom.
    pub dofs: Vec<usize>,
    pub stiffness: BandMatrix,
    /// Diagonal of the lumped mass matrix.
    pub mass: Vec<f64>,
    /// Flexural rigidity per node, N·m.
    pub rigidity: GridField,
}

/// Maps local `(a, b)` (a along the clamped axis) to a grid index.
#[derive(Clone, Copy)]
struct Frame {
    grid: Grid,
    clamped: ClampedEdges,
    edges: OtherEdges,
}

impl Frame {
    fn node(&self, a: usize, b: usize) -> usize {
        match self.clamped {
            ClampedEdges::XEdges => self.grid.index(a, b),
            ClampedEdges::YEdges => self.grid.index(b, a),
        }
    }

    fn b_range(&self) -> (usize, usize) {
        let n = self.grid.n;
        match self.edges {
            OtherEdges::Free => (0, n - 1),
            OtherEdges::SimplySupported => (1, n - 2),
        }
    }

    fn nx_free(&self) -> usize {
        self.grid.n - 2
    }

    /// Degree of freedom for local node `(a, b)`, after ghost reflection.
    /// Returns the dof and the sign picked up by the reflection.
    fn dof(&self, a: isize, b: isize) -> Option<(usize, f64)> {
        let n = self.grid.n as isize;
        // Clamped: zero slope mirrors the ghost column.
        let a = if a == -1 {
            1
        } else if a == n {
            n - 2
        } else {
            a
        };
        if a <= 0 || a >= n - 1 {
            return None;
        }
        let (mut b, mut sign) = (b, 1.0);
        if self.edges == OtherEdges::SimplySupported {
            // Zero moment: antisymmetric ghost row.
            if b == -1 {
                b = 1;
                sign = -1.0;
            } else if b == n {
                b = n - 2;
                sign = -1.0;
            }
            if b <= 0 || b >= n - 1 {
                return None;
            }
        }
        debug_assert!(b >= 0 && b < n);
        let (b_lo, _) = self.b_range();
        let d = (b as usize - b_lo) * self.nx_free() + (a as usize - 1);
        Some((d, sign))
    }
}

/// Linear functional of nodal deflections, merged by dof.
#[derive(Default)]
struct Stencil(Vec<(usize, f64)>);

impl Stencil {
    fn push(&mut self, frame: &Frame, a: isize, b: isize, coef: f64) {
        if let Some((d, sign)) = frame.dof(a, b) {
            match self.0.iter_mut().find(|(k, _)| *k == d) {
                Some(e) => e.1 += sign * coef,
                None => self.0.push((d, sign * coef)),
            }
        }
    }

    fn plus(&self, other: &Stencil) -> Stencil {
        let mut out = Stencil(self.0.clone());
        for &(d, c) in &other.0 {
            match out.0.iter_mut().find(|(k, _)| *k == d) {
                Some(e) => e.1 += c,
                None => out.0.push((d, c)),
            }
        }
        out
    }

    /// `K += w g gᵀ`.
    fn accumulate(&self, w: f64, k: &mut BandMatrix) {
        for (p, &(dp, cp)) in self.0.iter().enumerate() {
            for &(dq, cq) in &self.0[..=p] {
                k.add(dp, dq, w * cp * cq);
            }
        }
    }
}

pub fn assemble_operators(spec: &PlateSpec, t: &ThicknessMap) -> Result<PlateOperators> {
    spec.validate()?;
    let grid = spec.grid()?;
    if t.grid() != grid {
        return invalid("thickness map grid does not match the plate spec");
    }
    if let Some(bad) = t.field.values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return invalid(format!("non-positive thickness {bad}"));
    }
    let frame = Frame { grid, clamped: spec.clamped_edges, edges: spec.other_edges };
    let n = grid.n;
    let h = grid.spacing();
    let h2 = h * h;
    let nu = spec.poisson;
    let (b_lo, b_hi) = frame.b_range();
    let nx = frame.nx_free();
    let ndof = nx * (b_hi - b_lo + 1);
    // One-sided κyy on free edges mixed with κxx reaches one column further.
    let bw = 2 * nx + 1;

    let rigidity = GridField::new(grid, t.field.values.iter().map(|&th| spec.rigidity(th)).collect())?;

    let mut dofs = vec![0usize; ndof];
    for b in b_lo..=b_hi {
        for a in 1..n - 1 {
            let (d, _) = frame.dof(a as isize, b as isize).expect("interior dof");
            dofs[d] = frame.node(a, b);
        }
    }

    let mut k = BandMatrix::zeros(ndof, bw);
    let edge_w = |c: usize| if c == 0 || c == n - 1 { 0.5 } else { 1.0 };

    for b in 0..n {
        for a in 0..n {
            let (ai, bi) = (a as isize, b as isize);
            let mut gxx = Stencil::default();
            gxx.push(&frame, ai - 1, bi, 1.0 / h2);
            gxx.push(&frame, ai, bi, -2.0 / h2);
            gxx.push(&frame, ai + 1, bi, 1.0 / h2);

            let mut gyy = Stencil::default();
            // One-sided second difference on free edges.
            let bc: isize = match spec.other_edges {
                OtherEdges::Free if b == 0 => 1,
                OtherEdges::Free if b == n - 1 => bi - 1,
                _ => bi,
            };
            gyy.push(&frame, ai, bc - 1, 1.0 / h2);
            gyy.push(&frame, ai, bc, -2.0 / h2);
            gyy.push(&frame, ai, bc + 1, 1.0 / h2);

            if gxx.0.is_empty() && gyy.0.is_empty() {
                continue;
            }
            let area = h2 * edge_w(a) * edge_w(b);
            let d = rigidity.values[frame.node(a, b)];
            gxx.accumulate(area * d * (1.0 - nu), &mut k);
            gyy.accumulate(area * d * (1.0 - nu), &mut k);
            gxx.plus(&gyy).accumulate(area * d * nu, &mut k);
        }
    }

    for b in 0..n - 1 {
        for a in 0..n - 1 {
            let (ai, bi) = (a as isize, b as isize);
            let mut gxy = Stencil::default();
            gxy.push(&frame, ai + 1, bi + 1, 1.0 / h2);
            gxy.push(&frame, ai + 1, bi, -1.0 / h2);
            gxy.push(&frame, ai, bi + 1, -1.0 / h2);
            gxy.push(&frame, ai, bi, 1.0 / h2);
            if gxy.0.is_empty() {
                continue;
            }
            let d = 0.25
                * (rigidity.values[frame.node(a, b)]
                    + rigidity.values[frame.node(a + 1, b)]
                    + rigidity.values[frame.node(a, b + 1)]
                    + rigidity.values[frame.node(a + 1, b + 1)]);
            gxy.accumulate(h2 * d * 2.0 * (1.0 - nu), &mut k);
        }
    }

    let mass = dofs
        .iter()
        .map(|&node| {
            let (i, j) = grid.coords(node);
            spec.density * t.field.values[node] * h2 * edge_w(i) * edge_w(j)
        })
        .collect();

    Ok(PlateOperators { spec: spec.clone(), grid, dofs, stiffness: k, mass, rigidity })
}

impl PlateOperators {
    pub fn ndof(&self) -> usize {
        self.dofs.len()
    }

    /// Spreads a dof vector onto the full grid, zero on constrained nodes.
    pub fn to_grid(&self, v: &[f64]) -> GridField {
        let mut f = GridField::zeros(self.grid);
        for (d, &node) in self.dofs.iter().enumerate() {
            f.values[node] = v[d];
        }
        f
    }

    /// Restricts a grid field to the dofs.
    pub fn from_grid(&self, f: &GridField) -> Vec<f64> {
        self.dofs.iter().map(|&node| f.values[node]).collect()
    }

    /// Discrete strain energy `½ wᵀ K w` of a grid deflection.
    pub fn strain_energy(&self, f: &GridField) -> f64 {
        let w = self.from_grid(f);
        let mut kw = vec![0.0; w.len()];
        self.stiffness.mul_vec(&w, &mut kw);
        0.5 * w.iter().zip(&kw).map(|(a, b)| a * b).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plate::{apply_damage, DamageRegion};

    fn spec(n: usize) -> PlateSpec {
        PlateSpec { grid_n: n, ..PlateSpec::default() }
    }

    #[test]
    fn nominal_rigidity_matches_hand_value() {
        let s = spec(21);
        let ops = assemble_operators(&s, &s.uniform_thickness().unwrap()).unwrap();
        // 210e9 * 0.003³ / (12 * 0.91)
        for &d in &ops.rigidity.values {
            assert!((d - 519.2307692307).abs() < 1e-6);
        }
    }

    #[test]
    fn doubling_thickness_scales_rigidity_and_mass() {
        let s = spec(21);
        let t = s.uniform_thickness().unwrap();
        let a = assemble_operators(&s, &t).unwrap();
        let s2 = PlateSpec { thickness: 0.006, ..s.clone() };
        let b = assemble_operators(&s2, &t.scaled(2.0)).unwrap();
        for (x, y) in a.rigidity.values.iter().zip(&b.rigidity.values) {
            assert!((y / x - 8.0).abs() < 1e-12);
        }
        for (x, y) in a.mass.iter().zip(&b.mass) {
            assert!((y / x - 2.0).abs() < 1e-12);
        }
        for r in 0..a.ndof() {
            assert!((b.stiffness.get(r, r) / a.stiffness.get(r, r) - 8.0).abs() < 1e-10);
        }
    }

    #[test]
    fn thinned_cell_loses_seventy_percent_rigidity() {
        let s = spec(21);
        let t = s.uniform_thickness().unwrap();
        let g = t.grid();
        let d = apply_damage(&t, &[DamageRegion::new(vec![g.index(10, 10)], 0.001)]).unwrap();
        let ops = assemble_operators(&s, &d).unwrap();
        let ratio = ops.rigidity.values[g.index(10, 10)] / ops.rigidity.values[g.index(3, 3)];
        assert!((ratio - 8.0 / 27.0).abs() < 1e-12);
        assert!((ratio - 0.296).abs() < 1e-3);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let s = spec(21);
        let mut t = s.uniform_thickness().unwrap();
        t.field.values[7] = 0.0;
        assert!(assemble_operators(&s, &t).is_err());
        let coarse = spec(15);
        let t15 = ThicknessMap {
            nominal: 0.003,
            field: GridField::new(Grid::new(15, 1.0).unwrap(), vec![0.003; 225]).unwrap(),
        };
        assert!(assemble_operators(&coarse, &t15).is_err());
    }

    #[test]
    fn stiffness_is_positive_definite() {
        for edges in [OtherEdges::Free, OtherEdges::SimplySupported] {
            let s = PlateSpec { other_edges: edges, ..spec(21) };
            let ops = assemble_operators(&s, &s.uniform_thickness().unwrap()).unwrap();
            assert!(ops.stiffness.cholesky().is_ok());
        }
    }

    #[test]
    fn cylindrical_bending_energy_matches_quadrature() {
        // A y-independent shape has κyy = κxy = 0, so the discrete energy
        // should approach ½ D ∫ (w'')² dA.
        let s = spec(21);
        let ops = assemble_operators(&s, &s.uniform_thickness().unwrap()).unwrap();
        let g = ops.grid;
        let h = g.spacing();
        let f = GridField::from_fn(g, |p| (std::f64::consts::PI * p[0]).sin().powi(2));
        let e = ops.strain_energy(&f);
        // w'' = 2π² cos 2πx, so ½ D ∫∫ (w'')² dx dy = D π⁴.
        let d = s.rigidity(s.thickness);
        let exact = d * std::f64::consts::PI.powi(4);
        assert!((e - exact).abs() / exact < 0.02, "e={e} exact={exact} h={h}");
    }
}
