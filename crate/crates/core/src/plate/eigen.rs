//! Lowest eigenpairs of `K φ = λ M φ` by shift-invert Lanczos around zero.
//!
//! With lumped `M`, the pencil is reduced to `A = M^-½ K M^-½`, which keeps
//! the band structure. Lanczos with full reorthogonalization runs on `A⁻¹`
//! (one banded Cholesky, then two triangular sweeps per step), and the Ritz
//! block is polished by subspace-iteration steps until every pair meets the
//! residual tolerance in the original `K, M` form.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, GridField};
use crate::modal::align_sign;

use super::operators::PlateOperators;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EigenOptions {
    /// Seeds the Lanczos start vector.
    pub seed: u64,
    /// Bound on `‖Kφ − λMφ‖ / ‖Kφ‖` for every returned pair.
    pub residual_tol: f64,
    pub max_lanczos_steps: usize,
    pub max_refinements: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self { seed: 0, residual_tol: 1e-8, max_lanczos_steps: 400, max_refinements: 8 }
    }
}

/// The lowest computed eigenpairs, ascending in frequency.
#[derive(Debug, Clone)]
pub struct ModeSet {
    pub grid: Grid,
    pub frequencies: Vec<f64>,
    /// Unit-norm over the grid, sign-aligned.
    pub shapes: Vec<GridField>,
    pub residuals: Vec<f64>,
    pub lanczos_steps: usize,
}

impl ModeSet {
    /// Largest normalized `|φᵢᵀ M φⱼ|` over distinct pairs.
    pub fn max_mass_coupling(&self, ops: &PlateOperators) -> f64 {
        let v: Vec<Vec<f64>> = self.shapes.iter().map(|s| ops.from_grid(s)).collect();
        let mdot = |a: &[f64], b: &[f64]| a.iter().zip(b).zip(&ops.mass).map(|((x, y), m)| x * y * m).sum::<f64>();
        let mut worst: f64 = 0.0;
        for i in 0..v.len() {
            for j in 0..i {
                let c = mdot(&v[i], &v[j]) / (mdot(&v[i], &v[i]) * mdot(&v[j], &v[j])).sqrt();
                worst = worst.max(c.abs());
            }
        }
        worst
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Two passes of classical Gram-Schmidt against `basis`.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            axpy(-c, q, v);
        }
    }
}

pub fn lowest_modes(ops: &PlateOperators, k: usize, opts: &EigenOptions) -> Result<ModeSet> {
    let n = ops.ndof();
    if k == 0 || k > n {
        return invalid(format!("cannot extract {k} modes from {n} degrees of freedom"));
    }
    let scale: Vec<f64> = ops.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut a = ops.stiffness.clone();
    a.scale_symmetric(&scale);
    let chol = a.cholesky()?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut random_vec = |basis: &[Vec<f64>]| {
        let mut v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        orthogonalize(&mut v, basis);
        normalize(&mut v);
        v
    };

    let max_steps = opts.max_lanczos_steps.max(k + 1).min(n);
    let mut q: Vec<Vec<f64>> = vec![random_vec(&[])];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut ritz: Option<DMatrix<f64>> = None;

    for j in 0..max_steps {
        let mut w = q[j].clone();
        chol.solve_in_place(&mut w);
        let aj = dot(&q[j], &w);
        axpy(-aj, &q[j], &mut w);
        if j > 0 {
            axpy(-beta[j - 1], &q[j - 1], &mut w);
        }
        orthogonalize(&mut w, &q);
        let bj = dot(&w, &w).sqrt();
        alpha.push(aj);
        beta.push(bj);

        let steps = j + 1;
        let exhausted = bj <= 1e-14 * aj.abs();
        if steps >= k && (steps % 10 == 0 || steps == max_steps || exhausted) {
            let t = DMatrix::from_fn(steps, steps, |r, c| {
                if r == c {
                    alpha[r]
                } else if r == c + 1 {
                    beta[c]
                } else if c == r + 1 {
                    beta[r]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..steps).collect();
            order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
            let top = &order[..k];
            let converged = top.iter().all(|&i| {
                let theta = eig.eigenvalues[i];
                bj * eig.eigenvectors[(steps - 1, i)].abs() <= 1e-12 * theta.abs()
            });
            if converged || steps == max_steps || (exhausted && steps >= k) {
                let s = DMatrix::from_fn(steps, k, |r, c| eig.eigenvectors[(r, top[c])]);
                ritz = Some(s);
                break;
            }
        }
        if exhausted {
            q.push(random_vec(&q));
            *beta.last_mut().unwrap() = 0.0;
        } else {
            q.push(w.into_iter().map(|x| x / bj).collect());
        }
    }
    let lanczos_steps = alpha.len();
    let s = ritz.ok_or(Error::NoConvergence { iterations: lanczos_steps, residual: f64::INFINITY })?;

    let mut block: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            let mut x = vec![0.0; n];
            for (r, qr) in q.iter().enumerate().take(s.nrows()) {
                axpy(s[(r, c)], qr, &mut x);
            }
            normalize(&mut x);
            x
        })
        .collect();

    let residuals_of = |block: &[Vec<f64>]| -> (Vec<f64>, Vec<f64>) {
        let mut lams = Vec::with_capacity(k);
        let mut res = Vec::with_capacity(k);
        let mut ax = vec![0.0; n];
        let mut kphi = vec![0.0; n];
        for x in block {
            a.mul_vec(x, &mut ax);
            let lam = dot(x, &ax) / dot(x, x);
            let phi: Vec<f64> = x.iter().zip(&scale).map(|(v, s)| v * s).collect();
            ops.stiffness.mul_vec(&phi, &mut kphi);
            let r: f64 = kphi
                .iter()
                .zip(&phi)
                .zip(&ops.mass)
                .map(|((kp, p), m)| (kp - lam * m * p).powi(2))
                .sum::<f64>()
                .sqrt();
            lams.push(lam);
            res.push(r / dot(&kphi, &kphi).sqrt());
        }
        (lams, res)
    };

    let mut refinements = 0;
    let (mut lams, mut res) = residuals_of(&block);
    while res.iter().cloned().fold(0.0, f64::max) > opts.residual_tol {
        if refinements == opts.max_refinements {
            let worst = res.iter().cloned().fold(0.0, f64::max);
            return Err(Error::NoConvergence { iterations: lanczos_steps + refinements, residual: worst });
        }
        refinements += 1;
        // One subspace-iteration step on A⁻¹, then Rayleigh-Ritz.
        let mut w: Vec<Vec<f64>> = Vec::with_capacity(k);
        for x in &block {
            let mut y = x.clone();
            chol.solve_in_place(&mut y);
            orthogonalize(&mut y, &w);
            normalize(&mut y);
            w.push(y);
        }
        let mut aw = vec![vec![0.0; n]; k];
        for (wi, awi) in w.iter().zip(aw.iter_mut()) {
            a.mul_vec(wi, awi);
        }
        let h = DMatrix::from_fn(k, k, |r, c| 0.5 * (dot(&w[r], &aw[c]) + dot(&w[c], &aw[r])));
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
        block = order
            .iter()
            .map(|&c| {
                let mut x = vec![0.0; n];
                for (r, wr) in w.iter().enumerate() {
                    axpy(eig.eigenvectors[(r, c)], wr, &mut x);
                }
                normalize(&mut x);
                x
            })
            .collect();
        (lams, res) = residuals_of(&block);
    }

    let mut pairs: Vec<(f64, Vec<f64>, f64)> = block
        .into_iter()
        .zip(lams)
        .zip(res)
        .map(|((x, l), r)| (l, x, r))
        .collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));

    let mut frequencies = Vec::with_capacity(k);
    let mut shapes = Vec::with_capacity(k);
    let mut residuals = Vec::with_capacity(k);
    for (lam, x, r) in pairs {
        let phi: Vec<f64> = x.iter().zip(&scale).map(|(v, s)| v * s).collect();
        frequencies.push(lam.max(0.0).sqrt() / (2.0 * std::f64::consts::PI));
        shapes.push(align_sign(ops.to_grid(&phi).normalized()));
        residuals.push(r);
    }
    Ok(ModeSet { grid: ops.grid, frequencies, shapes, residuals, lanczos_steps })
}
