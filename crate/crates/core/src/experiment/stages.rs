//! The experiment stages and their on-disk artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::damage::{MetricsReport, PriorSource};
use crate::error::{invalid, Error, Result};
use crate::gp::{optimize_hyper, GpHyper, OptimizeOptions};
use crate::grid::{Grid, GridField, Point};
use crate::modal::ModalBasis;
use crate::oma::{band_bins, reduction_ratio, wire_size};
use crate::plate::{analytic_beam_basis, DamageRegion};
use crate::rng;
use crate::swarm::{run_mission, LocationOnly, MissionConfig, MissionResult};
use crate::vibration::{write_atomic, FieldCache};

use super::config::ExperimentConfig;
use super::pipeline::{dataset_groups, estimate_damage, field_for, field_mission, identify, score_map, BasisCache};
use super::report;
use super::scenario::generate_scenario;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const TIE_BREAK: &str = "highest variance, then lowest polar candidate index (radius-major)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// Everything needed to rerun one run: the full resolved configuration and
/// the run's identity. Wall-clock timings live in `timing.log` instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub swarm_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_t: Option<f64>,
    pub status: RunStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub tie_break: String,
    pub artifacts: Vec<String>,
    pub config: ExperimentConfig,
}

impl Manifest {
    fn new(stage: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            stage: stage.into(),
            version: VERSION.into(),
            config_hash: cfg.hash(),
            case: None,
            seed: None,
            swarm_size: None,
            r_t: None,
            status: RunStatus::Ok,
            error: None,
            tie_break: TIE_BREAK.into(),
            artifacts: Vec::new(),
            config: cfg.portable(),
        }
    }
}

/// Outcome of a stage: where it wrote and which runs failed.
#[derive(Debug, Clone, Default)]
pub struct StageSummary {
    pub dir: PathBuf,
    pub runs: usize,
    pub failed: Vec<String>,
}

impl StageSummary {
    pub fn ok(&self) -> bool {
        self.failed.is_empty()
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    write_atomic(path, text.as_bytes())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(path, &s)
}

fn pool(cfg: &ExperimentConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("worker pool: {e}")))
}

struct Timer {
    lines: Vec<String>,
    start: Instant,
}

impl Timer {
    fn new() -> Self {
        Self { lines: Vec::new(), start: Instant::now() }
    }

    fn mark(&mut self, what: &str, since: Instant) {
        self.lines.push(format!("{what}\t{:.3}s", since.elapsed().as_secs_f64()));
    }

    fn finish(mut self, dir: &Path) -> Result<()> {
        let total = self.start;
        self.mark("total", total);
        write_text(&dir.join("timing.log"), &(self.lines.join("\n") + "\n"))
    }
}

fn basis_cache(cfg: &ExperimentConfig) -> BasisCache {
    BasisCache::new(cfg.output.join("cache").join("bases"))
}

fn field_cache(cfg: &ExperimentConfig) -> Option<FieldCache> {
    cfg.cache_fields.then(|| FieldCache::new(cfg.output.join("cache").join("fields")))
}

/// Undamaged basis, solved once per output directory.
pub fn baseline(cfg: &ExperimentConfig) -> Result<ModalBasis> {
    basis_cache(cfg).get_or_solve(&cfg.pipeline, &[])
}

fn csv_f(x: f64) -> String {
    format!("{x:.9e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModeSummary {
    frequency: f64,
    weight: f64,
    analytic_frequency: f64,
}

/// Solves the undamaged plate and exports the retained modes.
pub fn run_modes(cfg: &ExperimentConfig) -> Result<StageSummary> {
    let dir = cfg.output.join("modes");
    let mut timer = Timer::new();
    let t = Instant::now();
    let basis = baseline(cfg)?;
    timer.mark("eigensolve", t);
    basis.export(&dir)?;
    let reference = analytic_beam_basis(&cfg.pipeline.plate)?;
    let summary: Vec<ModeSummary> = basis
        .modes
        .iter()
        .zip(&reference.modes)
        .map(|(m, r)| ModeSummary { frequency: m.frequency, weight: m.weight, analytic_frequency: r.frequency })
        .collect();
    write_json(&dir.join("frequencies.json"), &summary)?;
    let mut manifest = Manifest::new("modes", cfg);
    manifest.artifacts = vec!["basis.json".into(), "frequencies.json".into()];
    manifest.artifacts.extend(basis.header().files);
    write_json(&dir.join("manifest.json"), &manifest)?;
    timer.finish(&dir)?;
    Ok(StageSummary { dir, runs: 1, failed: Vec::new() })
}

fn mission_for(cfg: &ExperimentConfig, n: usize, r_t: f64) -> MissionConfig {
    let mut m = cfg.pipeline.mission.clone();
    m.n_robots = n;
    m.nav.r_t = r_t;
    m.nav.r_e = None;
    m
}

fn variance_rows(out: &mut String, n: usize, r_t: f64, seed: u64, res: &MissionResult) {
    for ((t, v), (_, o)) in res.probes.iter().zip(&res.observed) {
        let _ = writeln!(out, "{t},{n},{r_t},{seed},{},{}", csv_f(*v), csv_f(*o));
    }
}

const VARIANCE_HEADER: &str = "time,swarm_size,r_t,seed,max_variance,observed_variance\n";

/// Swarm size × radius × seed grid of location-only missions; writes the
/// probe-grid and robot-observed variance over time.
pub fn run_explore(cfg: &ExperimentConfig) -> Result<StageSummary> {
    let dir = cfg.output.join("explore");
    let mut timer = Timer::new();
    let t = Instant::now();
    let mut jobs = Vec::new();
    for &n in &cfg.explore.swarm_sizes {
        for &r_t in &cfg.explore.radii {
            for &seed in &cfg.seeds {
                jobs.push((n, r_t, seed));
            }
        }
    }
    let results: Vec<(usize, f64, u64, Result<MissionResult>)> = pool(cfg)?.install(|| {
        jobs.par_iter()
            .map(|&(n, r_t, seed)| (n, r_t, seed, run_mission(&mission_for(cfg, n, r_t), &LocationOnly, seed)))
            .collect()
    });
    timer.mark("missions", t);
    let mut raw = String::from(VARIANCE_HEADER);
    let mut failed = Vec::new();
    let mut cells: Vec<(usize, f64, Vec<&MissionResult>)> = Vec::new();
    for (n, r_t, seed, res) in &results {
        match res {
            Ok(res) => {
                variance_rows(&mut raw, *n, *r_t, *seed, res);
                match cells.iter_mut().find(|c| c.0 == *n && c.1 == *r_t) {
                    Some(c) => c.2.push(res),
                    None => cells.push((*n, *r_t, vec![res])),
                }
            }
            Err(e) => failed.push(format!("n={n} r_t={r_t} seed={seed}: {e}")),
        }
    }
    let mut summary = String::from("time,swarm_size,r_t,mean_max_variance,mean_observed_variance\n");
    for (n, r_t, runs) in &cells {
        let k = runs.len() as f64;
        for i in 0..runs[0].probes.len() {
            let v: f64 = runs.iter().map(|r| r.probes[i].1).sum::<f64>() / k;
            let o: f64 = runs.iter().map(|r| r.observed[i].1).sum::<f64>() / k;
            let _ = writeln!(summary, "{},{n},{r_t},{},{}", runs[0].probes[i].0, csv_f(v), csv_f(o));
        }
    }
    write_text(&dir.join("variance.csv"), &raw)?;
    write_text(&dir.join("summary.csv"), &summary)?;
    let mut manifest = Manifest::new("explore", cfg);
    manifest.artifacts = vec!["variance.csv".into(), "summary.csv".into()];
    if !failed.is_empty() {
        manifest.status = RunStatus::Failed;
        manifest.error = Some(failed.join("; "));
    }
    write_json(&dir.join("manifest.json"), &manifest)?;
    timer.finish(&dir)?;
    Ok(StageSummary { dir, runs: results.len(), failed })
}

/// One manifest-bearing run directory per swarm size × radius × seed;
/// finished runs with a matching configuration hash are skipped.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<StageSummary> {
    let dir = cfg.output.join("sweep");
    let mut timer = Timer::new();
    let t = Instant::now();
    let mut jobs = Vec::new();
    for &n in &cfg.sweep.swarm_sizes {
        for &r_t in &cfg.sweep.radii {
            for &seed in &cfg.seeds {
                jobs.push((n, r_t, seed, dir.join(format!("n{n:02}_rt{r_t:.3}_seed{seed}"))));
            }
        }
    }
    let hash = cfg.hash();
    let outcomes: Vec<Result<()>> = pool(cfg)?.install(|| {
        jobs.par_iter()
            .map(|(n, r_t, seed, run_dir)| {
                if let Ok(text) = fs::read_to_string(run_dir.join("manifest.json")) {
                    if let Ok(m) = serde_json::from_str::<Manifest>(&text) {
                        if m.status == RunStatus::Ok && m.config_hash == hash {
                            return Ok(());
                        }
                    }
                }
                let mut manifest = Manifest::new("sweep", cfg);
                manifest.seed = Some(*seed);
                manifest.swarm_size = Some(*n);
                manifest.r_t = Some(*r_t);
                let res = run_mission(&mission_for(cfg, *n, *r_t), &LocationOnly, *seed);
                let out = match &res {
                    Ok(res) => {
                        let mut csv = String::from(VARIANCE_HEADER);
                        variance_rows(&mut csv, *n, *r_t, *seed, res);
                        write_text(&run_dir.join("variance.csv"), &csv)?;
                        write_text(&run_dir.join("events.jsonl"), &res.events_jsonl())?;
                        manifest.artifacts = vec!["variance.csv".into(), "events.jsonl".into()];
                        Ok(())
                    }
                    Err(e) => {
                        manifest.status = RunStatus::Failed;
                        manifest.error = Some(e.to_string());
                        invalid(format!("{}: {e}", run_dir.display()))
                    }
                };
                write_json(&run_dir.join("manifest.json"), &manifest)?;
                out
            })
            .collect()
    });
    timer.mark("missions", t);
    let mut combined = String::from(VARIANCE_HEADER);
    for (_, _, _, run_dir) in &jobs {
        if let Ok(text) = fs::read_to_string(run_dir.join("variance.csv")) {
            combined.extend(text.lines().skip(1).map(|l| format!("{l}\n")));
        }
    }
    write_text(&dir.join("variance.csv"), &combined)?;
    timer.finish(&dir)?;
    let failed = outcomes.into_iter().filter_map(|r| r.err().map(|e| e.to_string())).collect();
    Ok(StageSummary { dir, runs: jobs.len(), failed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedMode {
    pub hyper: GpHyper,
    pub log_likelihood: f64,
    pub warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeRun {
    pub seed: u64,
    pub samples: usize,
    pub modes: Vec<OptimizedMode>,
}

/// Per-mode hyperparameters: the per-parameter median over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    pub modes: Vec<GpHyper>,
    pub bounds: (f64, f64),
    pub runs: Vec<OptimizeRun>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Seed of the `k`-th optimize run.
pub fn optimize_seed(cfg: &ExperimentConfig, k: usize) -> u64 {
    rng::stream(cfg.seeds[0], "optimize-run", &[k as u64]).random()
}

/// Fits the GP hyperparameters of each mode to modes identified on the
/// undamaged plate.
pub fn run_optimize(cfg: &ExperimentConfig) -> Result<StageSummary> {
    let dir = cfg.output.join("optimize");
    let mut timer = Timer::new();
    let t = Instant::now();
    let base = baseline(cfg)?;
    timer.mark("baseline", t);
    let fields = field_cache(cfg);
    let t = Instant::now();
    let runs: Vec<Result<(OptimizeRun, Vec<String>)>> = pool(cfg)?.install(|| {
        (0..cfg.optimize.runs)
            .into_par_iter()
            .map(|k| {
                let seed = optimize_seed(cfg, k);
                let field = field_for(&base, &cfg.pipeline.field, seed, fields.as_ref())?;
                let mission = field_mission(&cfg.pipeline, &base, &field, seed)?;
                let samples = &mission.robots[0].dataset.entries;
                let modes = identify(samples, &base, cfg.pipeline.csd)?;
                let x: Vec<Point> = samples.iter().map(|s| s.location).collect();
                let mut out = Vec::new();
                let mut traces = Vec::new();
                for m in &modes {
                    let opts = OptimizeOptions { seed, ..cfg.optimize.options.clone() };
                    let r = optimize_hyper(&x, &m.values, &opts)?;
                    traces.push(r.trace_csv());
                    out.push(OptimizedMode { hyper: r.hyper, log_likelihood: r.log_likelihood, warning: r.warning });
                }
                Ok((OptimizeRun { seed, samples: x.len(), modes: out }, traces))
            })
            .collect()
    });
    timer.mark("runs", t);
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (k, r) in runs.into_iter().enumerate() {
        match r {
            Ok((run, traces)) => {
                for (m, trace) in traces.iter().enumerate() {
                    write_text(&dir.join(format!("trace_run{k:02}_mode{}.csv", m + 1)), trace)?;
                }
                ok.push(run);
            }
            Err(e) => failed.push(format!("run {k}: {e}")),
        }
    }
    let mut manifest = Manifest::new("optimize", cfg);
    if ok.is_empty() {
        manifest.status = RunStatus::Failed;
        manifest.error = Some(failed.join("; "));
        write_json(&dir.join("manifest.json"), &manifest)?;
        return Ok(StageSummary { dir, runs: cfg.optimize.runs, failed });
    }
    let modes = (0..base.len())
        .map(|m| {
            let pick = |f: fn(&GpHyper) -> f64| median(ok.iter().map(|r| f(&r.modes[m].hyper)).collect());
            GpHyper { sigma_v: pick(|h| h.sigma_v), length_scale: pick(|h| h.length_scale), sigma_n: pick(|h| h.sigma_n) }
        })
        .collect();
    let params = GpParams { modes, bounds: cfg.optimize.options.bounds, runs: ok };
    write_json(&dir.join("gp_params.json"), &params)?;
    let mut table = String::from("parameter,mode_1,mode_2,bound_min,bound_max\n");
    for (name, f) in [
        ("sigma_v", (|h: &GpHyper| h.sigma_v) as fn(&GpHyper) -> f64),
        ("sigma_n", |h: &GpHyper| h.sigma_n),
        ("length_scale", |h: &GpHyper| h.length_scale),
    ] {
        let vals: Vec<String> = params.modes.iter().map(|h| csv_f(f(h))).collect();
        let _ = writeln!(table, "{name},{},{:e},{:e}", vals.join(","), params.bounds.0, params.bounds.1);
    }
    write_text(&dir.join("gp_params.csv"), &table)?;
    manifest.artifacts = vec!["gp_params.json".into(), "gp_params.csv".into()];
    if !failed.is_empty() {
        manifest.status = RunStatus::Failed;
        manifest.error = Some(failed.join("; "));
    }
    write_json(&dir.join("manifest.json"), &manifest)?;
    timer.finish(&dir)?;
    Ok(StageSummary { dir, runs: cfg.optimize.runs, failed })
}

/// Interpolation hyperparameters for inspection.
pub fn inspect_hypers(cfg: &ExperimentConfig) -> Result<Vec<GpHyper>> {
    if let Some(h) = &cfg.inspect.hypers {
        return Ok(h.clone());
    }
    let path = cfg.output.join("optimize").join("gp_params.json");
    let current = fs::read_to_string(cfg.output.join("optimize").join("manifest.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<Manifest>(&t).ok())
        .is_some_and(|m| m.status == RunStatus::Ok && m.config.optimize == cfg.optimize && m.config.pipeline == cfg.pipeline && m.config.seeds.first() == cfg.seeds.first());
    if !current || !path.exists() {
        let s = run_optimize(cfg)?;
        if !s.ok() {
            return invalid(format!("optimize stage failed: {}", s.failed.join("; ")));
        }
    }
    let params: GpParams = serde_json::from_str(&fs::read_to_string(&path)?)?;
    Ok(params.modes.into_iter().map(GpHyper::with_halved_length).collect())
}

/// One robot group's result in an inspection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub robots: Vec<usize>,
    pub samples: usize,
    pub metrics: MetricsReport,
    pub z_in: f64,
    pub z_out: f64,
    pub fdd_warnings: Vec<bool>,
    pub baseline_mac: Vec<f64>,
}

/// Per-run record written as `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InspectRecord {
    pub case: usize,
    pub seed: u64,
    pub damages: usize,
    pub grid_cells: usize,
    pub payload_bytes: usize,
    pub expected_payload_bytes: usize,
    pub bands: usize,
    pub bins_per_band: usize,
    pub reduction_ratio: f64,
    pub groups: Vec<GroupResult>,
}

fn grid_csv(f: &GridField) -> String {
    let n = f.grid.n;
    let mut s = String::new();
    for j in 0..n {
        let row: Vec<String> = (0..n).map(|i| csv_f(f.at(i, j))).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn mask_csv(grid: &Grid, mask: &[bool]) -> String {
    let n = grid.n;
    let mut s = String::new();
    for j in 0..n {
        let row: Vec<&str> = (0..n).map(|i| if mask[grid.index(i, j)] { "1" } else { "0" }).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Mission-derived reference fields: modes identified on the undamaged
/// plate with the same seed and interpolated like the damaged ones.
fn mission_prior(cfg: &ExperimentConfig, base: &ModalBasis, hypers: &[GpHyper], seed: u64, fields: Option<&FieldCache>) -> Result<Vec<GridField>> {
    let field = field_for(base, &cfg.pipeline.field, seed, fields)?;
    let mission = field_mission(&cfg.pipeline, base, &field, seed)?;
    let samples = &mission.robots[0].dataset.entries;
    let modes = identify(samples, base, cfg.pipeline.csd)?;
    let x: Vec<Point> = samples.iter().map(|s| s.location).collect();
    let grid = Grid::with_spacing(base.grid.side, cfg.pipeline.damage.spacing)?;
    modes.iter().zip(hypers).map(|(m, h)| crate::damage::interpolate_mode(&x, &m.values, h, grid)).collect()
}

/// One damaged-plate inspection: field, mission, one estimate per distinct
/// robot dataset, scores, and the run's artifacts in `run_dir`.
#[allow(clippy::too_many_arguments)]
pub fn inspect_run(
    cfg: &ExperimentConfig,
    base: &ModalBasis,
    damaged: &ModalBasis,
    regions: &[DamageRegion],
    hypers: &[GpHyper],
    case: usize,
    seed: u64,
    run_dir: &Path,
) -> Result<InspectRecord> {
    let p = &cfg.pipeline;
    let fields = field_cache(cfg);
    let field = field_for(damaged, &p.field, seed, fields.as_ref())?;
    let mission = field_mission(p, base, &field, seed)?;
    write_text(&run_dir.join("events.jsonl"), &mission.events_jsonl())?;
    let prior = match p.damage.prior {
        PriorSource::Mission => Some(mission_prior(cfg, base, hypers, seed, fields.as_ref())?),
        _ => None,
    };
    let first = &mission.robots[0].dataset;
    let payload_bytes = first.entries.first().map_or(0, |s| s.to_bytes().len());
    let resolution = p.field.sample_rate / (p.window_length * p.field.sample_rate).round();
    let bins = crate::oma::band_bins(p.delta_f, resolution);
    let len = (p.window_length * p.field.sample_rate).round() as usize;
    let mut groups = Vec::new();
    for (g, ids) in dataset_groups(&mission).into_iter().enumerate() {
        let samples = &mission.robots[ids[0]].dataset.entries;
        let est = estimate_damage(samples, base, hypers, p.csd, &p.damage, prior.as_deref())?;
        let sc = score_map(&est.map, &damaged.grid, regions)?;
        let suffix = if g == 0 { String::new() } else { format!("_group{g}") };
        write_text(&run_dir.join(format!("z{suffix}.csv")), &grid_csv(&est.map.z))?;
        write_text(&run_dir.join(format!("index{suffix}.csv")), &grid_csv(&est.map.index))?;
        write_text(&run_dir.join(format!("mask{suffix}.csv")), &mask_csv(&est.map.z.grid, &est.map.mask))?;
        groups.push(GroupResult {
            robots: ids,
            samples: samples.len(),
            metrics: sc.metrics,
            z_in: sc.z_in,
            z_out: sc.z_out,
            fdd_warnings: est.modes.iter().map(|m| m.has_warning()).collect(),
            baseline_mac: est.baseline_macs(base)?,
        });
    }
    let record = InspectRecord {
        case,
        seed,
        damages: regions.len(),
        grid_cells: Grid::with_spacing(base.grid.side, p.damage.spacing)?.len(),
        payload_bytes,
        expected_payload_bytes: wire_size(&vec![bins; base.len()]),
        bands: base.len(),
        bins_per_band: bins,
        reduction_ratio: reduction_ratio(base.len(), bins, len),
        groups,
    };
    if record.payload_bytes != record.expected_payload_bytes {
        return invalid(format!("payload of {} bytes, expected {}", record.payload_bytes, record.expected_payload_bytes));
    }
    write_json(&run_dir.join("metrics.json"), &record)?;
    Ok(record)
}

pub fn case_dir(cfg: &ExperimentConfig, case: usize) -> PathBuf {
    cfg.output.join("inspect").join(format!("case{case:02}"))
}

pub fn run_dir(cfg: &ExperimentConfig, case: usize, seed: u64) -> PathBuf {
    case_dir(cfg, case).join(format!("seed{seed}"))
}

/// Damage scenarios of every case.
pub fn scenarios(cfg: &ExperimentConfig, grid: &Grid) -> Result<Vec<Vec<DamageRegion>>> {
    (0..cfg.inspect.cases)
        .map(|c| generate_scenario(grid, &cfg.inspect.scenario, cfg.inspect.scenario_seed + c as u64))
        .collect()
}

/// Random damage cases × seeds, each scored against its ground truth,
/// followed by the aggregate tables.
pub fn run_inspect(cfg: &ExperimentConfig) -> Result<StageSummary> {
    let dir = cfg.output.join("inspect");
    let mut timer = Timer::new();
    let t = Instant::now();
    let base = baseline(cfg)?;
    let hypers = inspect_hypers(cfg)?;
    timer.mark("baseline and hyperparameters", t);
    let cases = scenarios(cfg, &base.grid)?;
    let cache = basis_cache(cfg);
    let pool = pool(cfg)?;
    let t = Instant::now();
    let bases: Vec<Result<ModalBasis>> =
        pool.install(|| cases.par_iter().map(|regions| cache.get_or_solve(&cfg.pipeline, regions)).collect());
    timer.mark("damaged eigensolves", t);
    for (c, regions) in cases.iter().enumerate() {
        write_json(&case_dir(cfg, c).join("regions.json"), regions)?;
    }
    let jobs: Vec<(usize, u64)> = (0..cases.len()).flat_map(|c| cfg.seeds.iter().map(move |&s| (c, s))).collect();
    let t = Instant::now();
    let outcomes: Vec<Result<()>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(c, seed)| {
                let rd = run_dir(cfg, c, seed);
                let mut manifest = Manifest::new("inspect", cfg);
                manifest.case = Some(c);
                manifest.seed = Some(seed);
                let res = match &bases[c] {
                    Ok(damaged) => inspect_run(cfg, &base, damaged, &cases[c], &hypers, c, seed, &rd),
                    Err(e) => invalid(format!("eigensolve for case {c}: {e}")),
                };
                let out = match res {
                    Ok(_) => {
                        manifest.artifacts = vec!["metrics.json".into(), "z.csv".into(), "index.csv".into(), "mask.csv".into(), "events.jsonl".into()];
                        Ok(())
                    }
                    Err(e) => {
                        manifest.status = RunStatus::Failed;
                        manifest.error = Some(e.to_string());
                        invalid(format!("case {c} seed {seed}: {e}"))
                    }
                };
                write_json(&rd.join("manifest.json"), &manifest)?;
                out
            })
            .collect()
    });
    timer.mark("runs", t);
    let failed: Vec<String> = outcomes.into_iter().filter_map(|r| r.err().map(|e| e.to_string())).collect();
    let summary = report::write_report(&dir, &dir)?;
    if !summary.missing.is_empty() {
        log::warn!("{} runs without metrics", summary.missing.len());
    }
    write_json(&dir.join("hypers.json"), &hypers)?;
    timer.finish(&dir)?;
    Ok(StageSummary { dir, runs: jobs.len(), failed })
}

/// Band size and reduction ratio implied by the configuration.
pub fn reduction_summary(cfg: &ExperimentConfig, modes: usize) -> (usize, f64) {
    let p = &cfg.pipeline;
    let len = (p.window_length * p.field.sample_rate).round() as usize;
    let bins = band_bins(p.delta_f, p.field.sample_rate / len as f64);
    (bins, reduction_ratio(modes, bins, len))
}
