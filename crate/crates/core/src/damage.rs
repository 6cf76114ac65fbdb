//! Damage localization from identified mode shapes.
//!
//! Identified mode values are interpolated onto a uniform grid, their
//! curvature is compared with the undamaged baseline's, and cells whose
//! weighted curvature deviation is an outlier are flagged.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gp::{self, GpHyper};
use crate::grid::{Grid, GridField, Point};
use crate::plate::ClampedEdges;

/// Where the undamaged reference curvature comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSource {
    /// Baseline values at the robots' sample locations, interpolated with the
    /// same GP as the identified mode.
    #[default]
    Sampled,
    /// Baseline shape evaluated directly on the estimation grid.
    Grid,
    /// Modes identified from a separate mission on the undamaged plate.
    Mission,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DamageParams {
    /// Estimation grid spacing, m.
    pub spacing: f64,
    pub theta_z: f64,
    /// Also add the second difference across the free axis.
    pub both_axes: bool,
    pub prior: PriorSource,
}

impl Default for DamageParams {
    fn default() -> Self {
        Self { spacing: 0.01, theta_z: 2.0, both_axes: false, prior: PriorSource::Sampled }
    }
}

/// GP posterior mean of one mode on `grid`, renormalized to unit norm.
pub fn interpolate_mode(x: &[Point], values: &[f64], h: &GpHyper, grid: Grid) -> Result<GridField> {
    if x.len() < 4 {
        return invalid(format!("need at least four identified samples, got {}", x.len()));
    }
    let mean = gp::posterior_mean(x, values, &grid.points(), h)?;
    let f = GridField::new(grid, mean)?;
    if !(f.norm() > 0.0) {
        return invalid("interpolated mode is identically zero");
    }
    Ok(f.normalized())
}

fn second_difference(v: &[f64], k: usize, h2: f64) -> f64 {
    let n = v.len();
    if k > 0 && k + 1 < n {
        (v[k - 1] - 2.0 * v[k] + v[k + 1]) / h2
    } else if n >= 4 {
        // Second-order one-sided stencils.
        if k == 0 {
            (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / h2
        } else {
            (2.0 * v[n - 1] - 5.0 * v[n - 2] + 4.0 * v[n - 3] - v[n - 4]) / h2
        }
    } else if k == 0 {
        (v[0] - 2.0 * v[1] + v[2]) / h2
    } else {
        (v[n - 3] - 2.0 * v[n - 2] + v[n - 1]) / h2
    }
}

fn axis_curvature(f: &GridField, along_x: bool) -> GridField {
    let g = f.grid;
    let n = g.n;
    let h2 = g.spacing().powi(2);
    let mut out = GridField::zeros(g);
    let mut line = vec![0.0; n];
    for fixed in 0..n {
        for (k, l) in line.iter_mut().enumerate() {
            *l = if along_x { f.at(k, fixed) } else { f.at(fixed, k) };
        }
        for k in 0..n {
            let idx = if along_x { g.index(k, fixed) } else { g.index(fixed, k) };
            out.values[idx] = second_difference(&line, k, h2);
        }
    }
    out
}

/// Second difference across the clamped edges. With `both_axes`, the
/// absolute second differences along the two axes are summed instead.
pub fn curvature(f: &GridField, clamped: ClampedEdges, both_axes: bool) -> GridField {
    let along_x = clamped == ClampedEdges::XEdges;
    let main = axis_curvature(f, along_x);
    if !both_axes {
        return main;
    }
    let other = axis_curvature(f, !along_x);
    let values = main.values.iter().zip(&other.values).map(|(a, b)| a.abs() + b.abs()).collect();
    GridField { grid: f.grid, values }
}

/// `D = Σ wᵢ |κᵢ − κᵢ_prior|`.
pub fn damage_index(kappa: &[GridField], prior: &[GridField], weights: &[f64]) -> Result<GridField> {
    if kappa.len() != prior.len() || kappa.len() != weights.len() || kappa.is_empty() {
        return invalid("curvatures, priors and weights must have matching, non-zero counts");
    }
    let grid = kappa[0].grid;
    if kappa.iter().chain(prior).any(|k| k.grid != grid) {
        return invalid("curvature fields live on different grids");
    }
    let mut d = GridField::zeros(grid);
    for ((k, p), w) in kappa.iter().zip(prior).zip(weights) {
        for ((dv, a), b) in d.values.iter_mut().zip(&k.values).zip(&p.values) {
            *dv += w * (a - b).abs();
        }
    }
    Ok(d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DamageMap {
    pub index: GridField,
    pub z: GridField,
    pub mask: Vec<bool>,
    pub mean: f64,
    /// Population standard deviation of the index over the grid.
    pub std: f64,
}

pub fn z_classify(d: &GridField, theta_z: f64) -> Result<DamageMap> {
    if d.values.iter().any(|v| !v.is_finite()) {
        return invalid("non-finite damage index");
    }
    let n = d.values.len() as f64;
    let mean = d.values.iter().sum::<f64>() / n;
    let std = (d.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let z = if std < 1e-15 {
        GridField::zeros(d.grid)
    } else {
        GridField { grid: d.grid, values: d.values.iter().map(|v| (v - mean) / std).collect() }
    };
    let mask = z.values.iter().map(|&v| v > theta_z).collect();
    Ok(DamageMap { index: d.clone(), z, mask, mean, std })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn add(&mut self, o: &Confusion) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / self.total() as f64
        }
    }

    /// Zero when nothing was flagged.
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    /// The mask was empty, so precision is reported as 0.
    pub precision_undefined: bool,
    pub detected: usize,
    pub total: usize,
    pub confusion: Confusion,
}

/// Cellwise confusion of `mask` against per-damage ground truth masks; a
/// damage is detected when any flagged cell lies inside it.
pub fn score(mask: &[bool], truth: &[Vec<bool>]) -> Result<MetricsReport> {
    if truth.iter().any(|t| t.len() != mask.len()) {
        return invalid("mask and ground truth sizes differ");
    }
    let mut c = Confusion::default();
    for (k, &m) in mask.iter().enumerate() {
        let damaged = truth.iter().any(|t| t[k]);
        match (m, damaged) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    let detected = truth.iter().filter(|t| t.iter().zip(mask).any(|(a, b)| *a && *b)).count();
    Ok(MetricsReport {
        accuracy: c.accuracy(),
        precision: c.precision(),
        recall: c.recall(),
        precision_undefined: c.tp + c.fp == 0,
        detected,
        total: truth.len(),
        confusion: c,
    })
}

/// Ground-truth mask of plate cells resampled onto an estimation grid by
/// nearest plate node.
pub fn resample_mask(plate: &Grid, cells: &[bool], target: &Grid) -> Result<Vec<bool>> {
    if cells.len() != plate.len() {
        return invalid("mask does not match the plate grid");
    }
    if *plate == *target {
        return Ok(cells.to_vec());
    }
    let h = plate.spacing();
    Ok(target
        .points()
        .iter()
        .map(|p| {
            let i = ((p[0] / h).round() as usize).min(plate.n - 1);
            let j = ((p[1] / h).round() as usize).min(plate.n - 1);
            cells[plate.index(i, j)]
        })
        .collect())
}

/// Mean z-score inside and outside a region.
pub fn region_z_means(z: &GridField, region: &[bool]) -> (f64, f64) {
    let (mut si, mut ni, mut so, mut no) = (0.0, 0usize, 0.0, 0usize);
    for (v, &inside) in z.values.iter().zip(region) {
        if inside {
            si += v;
            ni += 1;
        } else {
            so += v;
            no += 1;
        }
    }
    (si / ni.max(1) as f64, so / no.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::new(101, 1.0).unwrap()
    }

    #[test]
    fn quadratic_curvature_is_exact() {
        let f = GridField::from_fn(grid(), |p| p[0] * p[0]);
        let k = curvature(&f, ClampedEdges::XEdges, false);
        assert!(k.values.iter().all(|v| (v - 2.0).abs() < 1e-8), "{:?}", &k.values[..3]);
        let lin = GridField::from_fn(grid(), |p| 3.0 * p[0] - p[1]);
        let k = curvature(&lin, ClampedEdges::XEdges, false);
        assert!(k.values.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn sine_curvature_within_a_tenth_of_a_percent() {
        let g = grid();
        let f = GridField::from_fn(g, |p| (PI * p[0]).sin());
        let k = curvature(&f, ClampedEdges::XEdges, false);
        for j in [0, 50, 100] {
            for i in 1..100 {
                let exact = -PI * PI * (PI * g.point(i, j)[0]).sin();
                assert!((k.at(i, j) - exact).abs() <= 1e-3 * exact.abs(), "{i}");
            }
        }
    }

    #[test]
    fn y_clamping_differentiates_along_y() {
        let f = GridField::from_fn(grid(), |p| p[1] * p[1] + p[0]);
        let k = curvature(&f, ClampedEdges::YEdges, false);
        assert!(k.values.iter().all(|v| (v - 2.0).abs() < 1e-8));
    }

    #[test]
    fn identical_curvature_gives_zero_index() {
        let k = GridField::from_fn(grid(), |p| p[0].sin());
        let d = damage_index(std::slice::from_ref(&k), std::slice::from_ref(&k), &[1.0]).unwrap();
        assert!(d.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_mode_deviation_is_weighted() {
        let g = grid();
        let base = GridField::zeros(g);
        let dev = GridField::from_fn(g, |p| p[0] - 0.5);
        let w = [0.66 / 0.95, 0.29 / 0.95];
        let d = damage_index(&[dev.clone(), base.clone()], &[base.clone(), base], &w).unwrap();
        for (a, b) in d.values.iter().zip(&dev.values) {
            assert!((a - w[0] * b.abs()).abs() < 1e-15);
        }
        assert!((w[0] - 0.6947).abs() < 1e-4 && (w[1] - 0.3053).abs() < 1e-4);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = GridField::zeros(grid());
        let b = GridField::zeros(Grid::new(51, 1.0).unwrap());
        assert!(damage_index(&[a], &[b], &[1.0]).is_err());
    }

    #[test]
    fn constant_index_flags_nothing() {
        let d = GridField::from_fn(grid(), |_| 3.0);
        let m = z_classify(&d, 2.0).unwrap();
        assert!(m.z.values.iter().all(|v| *v == 0.0));
        assert!(m.mask.iter().all(|v| !v));
    }

    #[test]
    fn spike_is_flagged() {
        let g = grid();
        let mut d = GridField::from_fn(g, |_| 1.0);
        let c = g.center_index();
        d.values[c] = 5.0;
        let m = z_classify(&d, 2.0).unwrap();
        assert!(m.mask[c]);
        assert_eq!(m.mask.iter().filter(|v| **v).count(), 1);
    }

    #[test]
    fn perfect_and_empty_masks() {
        let truth = vec![vec![true, true, false, false, false], vec![false, false, false, false, true]];
        let perfect = [true, true, false, false, true];
        let r = score(&perfect, &truth).unwrap();
        assert_eq!((r.accuracy, r.precision, r.recall), (1.0, 1.0, 1.0));
        assert_eq!((r.detected, r.total), (2, 2));
        let r = score(&[false; 5], &truth).unwrap();
        assert_eq!(r.recall, 0.0);
        assert_eq!(r.precision, 0.0);
        assert!(r.precision_undefined);
        assert_eq!(r.detected, 0);
    }

    #[test]
    fn interpolation_reproduces_node_samples() {
        let g = Grid::new(11, 1.0).unwrap();
        let truth = GridField::from_fn(g, |p| (PI * p[0]).sin() * (1.0 + 0.2 * p[1])).normalized();
        let h = GpHyper { sigma_v: 1.0, length_scale: 0.15, sigma_n: 1e-6 };
        let f = interpolate_mode(&g.points(), &truth.values, &h, g).unwrap();
        for (a, b) in f.values.iter().zip(&truth.values) {
            assert!((a - b).abs() < 1e-6);
        }
        assert!((f.norm() - 1.0).abs() < 1e-12);
        assert!(interpolate_mode(&g.points()[..3], &truth.values[..3], &h, g).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn z_scores_are_standardized(vals in prop::collection::vec(-10.0f64..10.0, 121)) {
            let g = Grid::new(11, 1.0).unwrap();
            let d = GridField::new(g, vals).unwrap();
            let m = z_classify(&d, 2.0).unwrap();
            if m.std > 1e-15 {
                let n = m.z.values.len() as f64;
                let mean = m.z.values.iter().sum::<f64>() / n;
                let var = m.z.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                prop_assert!(mean.abs() < 1e-12);
                prop_assert!((var - 1.0).abs() < 1e-12);
            }
            for (z, f) in m.z.values.iter().zip(&m.mask) {
                prop_assert_eq!(*f, *z > 2.0);
            }
        }

        #[test]
        fn metrics_are_fractions(mask in prop::collection::vec(any::<bool>(), 30), t in prop::collection::vec(any::<bool>(), 30)) {
            let r = score(&mask, &[t]).unwrap();
            for v in [r.accuracy, r.precision, r.recall] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn sign_flip_leaves_index_unchanged(a in 0.1f64..3.0, b in -1.0f64..1.0) {
            let g = Grid::new(21, 1.0).unwrap();
            let est = GridField::from_fn(g, |p| a * (PI * p[0]).sin() + b * p[0] * p[0] * p[1]).normalized();
            let base = GridField::from_fn(g, |p| (PI * p[0]).sin()).normalized();
            let kb = curvature(&base, ClampedEdges::XEdges, false);
            let d1 = damage_index(&[curvature(&est, ClampedEdges::XEdges, false)], std::slice::from_ref(&kb), &[1.0]).unwrap();
            let flipped = GridField { grid: g, values: est.values.iter().map(|v| -v).collect() };
            // Sign alignment against the baseline undoes the flip.
            let aligned = if flipped.values.iter().zip(&base.values).map(|(x, y)| x * y).sum::<f64>() < 0.0 {
                GridField { grid: g, values: flipped.values.iter().map(|v| -v).collect() }
            } else {
                flipped
            };
            let d2 = damage_index(&[curvature(&aligned, ClampedEdges::XEdges, false)], &[kb], &[1.0]).unwrap();
            prop_assert_eq!(d1.values, d2.values);
        }
    }
}
