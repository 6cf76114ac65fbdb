//! One inspection run from plate to damage map.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::damage::{self, region_z_means, resample_mask, z_classify, DamageMap, DamageParams, MetricsReport, PriorSource};
use crate::error::{invalid, Result};
use crate::gp::GpHyper;
use crate::grid::{mac, Grid, GridField, Point};
use crate::modal::ModalBasis;
use crate::oma::{build_csd, fdd_mode, CsdAveraging, FddMode, SpectrumSample};
use crate::plate::{apply_damage, assemble_operators, solve_modes, DamageRegion, EigenOptions, PlateSpec};
use crate::swarm::{run_mission, FieldAcquisition, MissionConfig, MissionResult, WindowPolicy};
use crate::vibration::{write_atomic, FieldCache, FieldParams, SensorModel, VibrationField};

/// Everything a run needs besides the damage and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub plate: PlateSpec,
    pub eigen: EigenOptions,
    /// Eigenpairs computed before the retained pair is picked.
    pub solve_modes: usize,
    pub field: FieldParams,
    pub sensor: SensorModel,
    /// Band width kept around each baseline frequency, Hz.
    pub delta_f: f64,
    /// Sampling window, s.
    pub window_length: f64,
    pub window_policy: WindowPolicy,
    pub csd: CsdAveraging,
    pub mission: MissionConfig,
    pub damage: DamageParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            plate: PlateSpec::default(),
            eigen: EigenOptions::default(),
            solve_modes: 16,
            field: FieldParams::default(),
            sensor: SensorModel::default(),
            delta_f: 10.0,
            window_length: 15.0,
            window_policy: WindowPolicy::PerRun,
            csd: CsdAveraging::BandMean,
            mission: MissionConfig::default(),
            damage: DamageParams::default(),
        }
    }
}

/// Modal basis of the plate with the given damage.
pub fn plate_basis(cfg: &PipelineConfig, regions: &[DamageRegion]) -> Result<ModalBasis> {
    let t = apply_damage(&cfg.plate.uniform_thickness()?, regions)?;
    let ops = assemble_operators(&cfg.plate, &t)?;
    solve_modes(&ops, cfg.solve_modes, &cfg.eigen)
}

/// Damaged bases on disk, keyed by plate, solver settings and damage.
#[derive(Debug, Clone)]
pub struct BasisCache {
    pub dir: PathBuf,
}

impl BasisCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn key(cfg: &PipelineConfig, regions: &[DamageRegion]) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&(&cfg.plate, &cfg.eigen, cfg.solve_modes, regions)).unwrap_or_default());
        hex::encode(&h.finalize()[..12])
    }

    pub fn get_or_solve(&self, cfg: &PipelineConfig, regions: &[DamageRegion]) -> Result<ModalBasis> {
        let path = self.dir.join(format!("basis-{}.bin", Self::key(cfg, regions)));
        if let Ok(bytes) = std::fs::read(&path) {
            match ModalBasis::from_bytes(&bytes) {
                Ok(b) => return Ok(b),
                Err(e) => log::warn!("ignoring unreadable cached basis {}: {e}", path.display()),
            }
        }
        let basis = plate_basis(cfg, regions)?;
        std::fs::create_dir_all(&self.dir)?;
        write_atomic(&path, &basis.to_bytes())?;
        Ok(basis)
    }
}

/// Ambient field of `basis`, through the cache when one is given.
pub fn field_for(basis: &ModalBasis, params: &FieldParams, seed: u64, cache: Option<&FieldCache>) -> Result<VibrationField> {
    match cache {
        Some(c) => c.get_or_simulate(basis, params, seed),
        None => crate::vibration::simulate_field(basis, params, seed),
    }
}

/// Runs the swarm over `field`, sampling bands around the baseline
/// frequencies.
pub fn field_mission(cfg: &PipelineConfig, baseline: &ModalBasis, field: &VibrationField, seed: u64) -> Result<MissionResult> {
    let acq = FieldAcquisition {
        field,
        sensor: cfg.sensor,
        frequencies: baseline.frequencies(),
        delta_f: cfg.delta_f,
        window_length: cfg.window_length,
        policy: cfg.window_policy,
        seed,
    };
    run_mission(&cfg.mission, &acq, seed)
}

/// FDD per retained mode, sign-aligned with the baseline at the sample
/// locations.
pub fn identify(samples: &[SpectrumSample], baseline: &ModalBasis, averaging: CsdAveraging) -> Result<Vec<FddMode>> {
    (0..baseline.len())
        .map(|m| {
            let prior: Vec<f64> = samples
                .iter()
                .map(|s| baseline.modes[m].shape.interpolate(s.location))
                .collect::<Result<_>>()?;
            fdd_mode(&build_csd(samples, m, averaging)?, Some(&prior))
        })
        .collect()
}

/// Baseline shape on the estimation grid, unit norm.
pub fn baseline_on(baseline: &ModalBasis, mode: usize, grid: Grid) -> Result<GridField> {
    let shape = &baseline.modes[mode].shape;
    let values = grid.points().iter().map(|&p| shape.interpolate(p)).collect::<Result<_>>()?;
    Ok(GridField::new(grid, values)?.normalized())
}

/// Identified modes, their interpolated fields and the resulting damage map.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub modes: Vec<FddMode>,
    pub fields: Vec<GridField>,
    pub map: DamageMap,
}

impl Estimate {
    /// MAC of each interpolated field against the baseline on the same grid.
    pub fn baseline_macs(&self, baseline: &ModalBasis) -> Result<Vec<f64>> {
        self.fields
            .iter()
            .enumerate()
            .map(|(m, f)| Ok(mac(&f.values, &baseline_on(baseline, m, f.grid)?.values)))
            .collect()
    }
}

/// Identification, interpolation, curvature comparison and thresholding for
/// one dataset. `mission_prior` supplies the reference fields when the prior
/// source is [`PriorSource::Mission`].
pub fn estimate_damage(
    samples: &[SpectrumSample],
    baseline: &ModalBasis,
    hypers: &[GpHyper],
    averaging: CsdAveraging,
    params: &DamageParams,
    mission_prior: Option<&[GridField]>,
) -> Result<Estimate> {
    if hypers.len() != baseline.len() {
        return invalid(format!("{} hyperparameter sets for {} modes", hypers.len(), baseline.len()));
    }
    let grid = Grid::with_spacing(baseline.grid.side, params.spacing)?;
    let modes = identify(samples, baseline, averaging)?;
    let x: Vec<Point> = samples.iter().map(|s| s.location).collect();
    let mut fields = Vec::with_capacity(modes.len());
    let mut kappa = Vec::with_capacity(modes.len());
    let mut prior = Vec::with_capacity(modes.len());
    for (m, (fm, h)) in modes.iter().zip(hypers).enumerate() {
        let f = damage::interpolate_mode(&x, &fm.values, h, grid)?;
        let reference = match params.prior {
            PriorSource::Grid => baseline_on(baseline, m, grid)?,
            PriorSource::Sampled => {
                let values: Vec<f64> = x.iter().map(|&p| baseline.modes[m].shape.interpolate(p)).collect::<Result<_>>()?;
                damage::interpolate_mode(&x, &values, h, grid)?
            }
            PriorSource::Mission => match mission_prior.and_then(|p| p.get(m)) {
                Some(p) if p.grid == grid => p.clone(),
                _ => return invalid(format!("mission prior for mode {m} missing or on another grid")),
            },
        };
        kappa.push(damage::curvature(&f, baseline.clamped, params.both_axes));
        prior.push(damage::curvature(&reference, baseline.clamped, params.both_axes));
        fields.push(f);
    }
    let d = damage::damage_index(&kappa, &prior, &baseline.weights())?;
    let map = z_classify(&d, params.theta_z)?;
    Ok(Estimate { modes, fields, map })
}

/// Scores of one damage map against the true regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScore {
    pub metrics: MetricsReport,
    /// Mean z-score inside and outside the union of the regions.
    pub z_in: f64,
    pub z_out: f64,
}

pub fn score_map(map: &DamageMap, plate: &Grid, regions: &[DamageRegion]) -> Result<RunScore> {
    let truth: Vec<Vec<bool>> = regions
        .iter()
        .map(|r| resample_mask(plate, &r.mask(plate), &map.z.grid))
        .collect::<Result<_>>()?;
    let metrics = damage::score(&map.mask, &truth)?;
    let union: Vec<bool> = (0..map.mask.len()).map(|k| truth.iter().any(|t| t[k])).collect();
    let (z_in, z_out) = if regions.is_empty() { (0.0, region_z_means(&map.z, &union).1) } else { region_z_means(&map.z, &union) };
    Ok(RunScore { metrics, z_in, z_out })
}

/// Robots grouped by identical datasets, so each distinct dataset is
/// estimated once.
pub fn dataset_groups(mission: &MissionResult) -> Vec<Vec<usize>> {
    let mut groups: Vec<(Vec<Point>, Vec<usize>)> = Vec::new();
    for r in &mission.robots {
        let locs = r.dataset.locations();
        match groups.iter_mut().find(|(l, _)| *l == locs) {
            Some((_, ids)) => ids.push(r.id),
            None => groups.push((locs, vec![r.id])),
        }
    }
    groups.into_iter().map(|(_, ids)| ids).collect()
}
