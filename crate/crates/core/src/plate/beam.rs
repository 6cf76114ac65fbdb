//! Clamped-clamped beam modes, used as a cylindrical-bending surrogate for
//! the plate and as the reference for selecting the retained plate modes.

use std::f64::consts::PI;

use crate::error::Result;
use crate::grid::GridField;
use crate::modal::{align_sign, Mode, ModalBasis, DEFAULT_ENERGY_SHARES};

use super::{ClampedEdges, PlateSpec};

/// `k`-th positive root of `cos z cosh z = 1` (k ≥ 1).
pub fn beam_root(k: usize) -> f64 {
    let mut z = (k as f64 + 0.5) * PI;
    for _ in 0..50 {
        let f = z.cos() * z.cosh() - 1.0;
        let df = -z.sin() * z.cosh() + z.cos() * z.sinh();
        let step = f / df;
        z -= step;
        if step.abs() < 1e-15 * z {
            break;
        }
    }
    z
}

/// Mode function of a clamped-clamped beam at normalized position `xi ∈ [0, 1]`.
pub fn clamped_beam_mode(root: f64, xi: f64) -> f64 {
    let sigma = (root.cosh() - root.cos()) / (root.sinh() - root.sin());
    let z = root * xi;
    z.cosh() - z.cos() - sigma * (z.sinh() - z.sin())
}

/// Beam modes 1 and 3 extruded along the free axis, with their analytic
/// frequencies `f = root² / (2π L²) · √(D / ρt)`.
pub fn analytic_beam_basis(spec: &PlateSpec) -> Result<ModalBasis> {
    spec.validate()?;
    let grid = spec.grid()?;
    let l = spec.side_length;
    let speed = (spec.rigidity(spec.thickness) / (spec.density * spec.thickness)).sqrt();
    let modes = [1usize, 3]
        .iter()
        .zip(DEFAULT_ENERGY_SHARES)
        .map(|(&k, share)| {
            let root = beam_root(k);
            let shape = GridField::from_fn(grid, |p| {
                let along = match spec.clamped_edges {
                    ClampedEdges::XEdges => p[0],
                    ClampedEdges::YEdges => p[1],
                };
                clamped_beam_mode(root, along / l)
            });
            Mode {
                frequency: root * root / (2.0 * PI * l * l) * speed,
                weight: share,
                shape: align_sign(shape.normalized()),
            }
        })
        .collect();
    ModalBasis::new(grid, spec.clamped_edges, modes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_match_tabulated_values() {
        assert!((beam_root(1) - 4.730_040_745).abs() < 1e-8);
        assert!((beam_root(2) - 7.853_204_624).abs() < 1e-8);
        assert!((beam_root(3) - 10.995_607_838).abs() < 1e-8);
        assert!((beam_root(1).powi(2) - 22.373).abs() < 1e-3);
        assert!((beam_root(3).powi(2) - 120.90).abs() < 1e-2);
    }

    #[test]
    fn surrogate_frequencies() {
        let b = analytic_beam_basis(&PlateSpec::default()).unwrap();
        let f = b.frequencies();
        assert!((f[0] - 16.7).abs() < 0.05, "{f:?}");
        assert!((f[1] - 90.4).abs() < 0.1, "{f:?}");
    }

    #[test]
    fn mode_one_is_clamped_at_both_ends() {
        let r = beam_root(1);
        let h = 1e-6;
        for xi in [0.0, 1.0] {
            assert!(clamped_beam_mode(r, xi).abs() < 1e-9);
        }
        let slope0 = (clamped_beam_mode(r, h) - clamped_beam_mode(r, 0.0)) / h;
        let slope1 = (clamped_beam_mode(r, 1.0) - clamped_beam_mode(r, 1.0 - h)) / h;
        assert!(slope0.abs() < 1e-4 && slope1.abs() < 1e-4);
    }

    #[test]
    fn mode_three_has_two_interior_zero_lines() {
        let r = beam_root(3);
        let m = 10_000;
        let mut crossings = Vec::new();
        let mut prev = clamped_beam_mode(r, 1e-3);
        for k in 1..m {
            let xi = 1e-3 + k as f64 * (1.0 - 2e-3) / m as f64;
            let v = clamped_beam_mode(r, xi);
            if v.signum() != prev.signum() {
                crossings.push(xi);
            }
            prev = v;
        }
        assert_eq!(crossings.len(), 2, "{crossings:?}");
        assert!((crossings[0] - 0.36).abs() < 0.01);
        assert!((crossings[1] - 0.64).abs() < 0.01);
    }
}
