//! Aggregate tables over finished inspection runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::damage::Confusion;
use crate::error::{Error, Result};

use super::stages::{write_json, write_text, InspectRecord, Manifest, RunStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation; a single value has zero spread.
pub fn mean_std(v: &[f64]) -> MeanStd {
    if v.is_empty() {
        return MeanStd { mean: f64::NAN, std: f64::NAN };
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() < 2 { 0.0 } else { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() };
    MeanStd { mean, std }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    /// Case index, or `None` for the overall row.
    pub case: Option<usize>,
    pub damages: usize,
    pub runs: usize,
    pub estimates: usize,
    pub accuracy: MeanStd,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub detected: MeanStd,
    pub z_in: MeanStd,
    pub z_out: MeanStd,
    pub precision_undefined: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub runs: usize,
    /// Run directories without usable metrics.
    pub missing: Vec<String>,
    /// Spread over every robot of every run.
    pub by_robot: Vec<CaseRow>,
    /// Spread over seeds of the per-run robot means.
    pub by_seed: Vec<CaseRow>,
}

#[derive(Default)]
struct Values {
    accuracy: Vec<f64>,
    precision: Vec<f64>,
    recall: Vec<f64>,
    detected: Vec<f64>,
    z_in: Vec<f64>,
    z_out: Vec<f64>,
    undefined: usize,
}

impl Values {
    fn row(&self, case: Option<usize>, damages: usize, runs: usize) -> CaseRow {
        CaseRow {
            case,
            damages,
            runs,
            estimates: self.accuracy.len(),
            accuracy: mean_std(&self.accuracy),
            precision: mean_std(&self.precision),
            recall: mean_std(&self.recall),
            detected: mean_std(&self.detected),
            z_in: mean_std(&self.z_in),
            z_out: mean_std(&self.z_out),
            precision_undefined: self.undefined,
        }
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

fn sorted_dirs(dir: &Path, prefix: &str) -> Vec<PathBuf> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with(prefix)))
        .collect();
    out.sort();
    out
}

/// Reads every `case*/seed*/metrics.json` under `inspect_dir`.
pub fn load_records(inspect_dir: &Path) -> (Vec<InspectRecord>, Vec<String>) {
    let mut records = Vec::new();
    let mut missing = Vec::new();
    for case in sorted_dirs(inspect_dir, "case") {
        for run in sorted_dirs(&case, "seed") {
            let failed = fs::read_to_string(run.join("manifest.json"))
                .ok()
                .and_then(|t| serde_json::from_str::<Manifest>(&t).ok())
                .is_none_or(|m| m.status != RunStatus::Ok);
            let record = fs::read_to_string(run.join("metrics.json")).ok().and_then(|t| serde_json::from_str::<InspectRecord>(&t).ok());
            match record {
                Some(r) if !failed => records.push(r),
                _ => missing.push(run.display().to_string()),
            }
        }
    }
    records.sort_by_key(|r| (r.case, r.seed));
    (records, missing)
}

/// Per-case rows plus the overall row, whose accuracy, precision and recall
/// come from confusion counts pooled over every estimate.
pub fn aggregate(records: &[InspectRecord]) -> (Vec<CaseRow>, Vec<CaseRow>) {
    let mut cases: Vec<usize> = records.iter().map(|r| r.case).collect();
    cases.dedup();
    let (mut by_robot, mut by_seed) = (Vec::new(), Vec::new());
    let (mut all_r, mut all_s) = (Values::default(), Values::default());
    let mut pooled = Confusion::default();
    let (mut damages_total, mut detected_total, mut runs_total) = (0usize, 0.0, 0usize);
    for &c in &cases {
        let runs: Vec<&InspectRecord> = records.iter().filter(|r| r.case == c).collect();
        let (mut vr, mut vs) = (Values::default(), Values::default());
        let mut case_detected = 0.0;
        for r in &runs {
            let mut robot_level = Values::default();
            for g in &r.groups {
                for _ in &g.robots {
                    robot_level.accuracy.push(g.metrics.accuracy);
                    robot_level.precision.push(g.metrics.precision);
                    robot_level.recall.push(g.metrics.recall);
                    robot_level.detected.push(g.metrics.detected as f64);
                    robot_level.z_in.push(g.z_in);
                    robot_level.z_out.push(g.z_out);
                    robot_level.undefined += g.metrics.precision_undefined as usize;
                    pooled.add(&g.metrics.confusion);
                }
            }
            for (dst, src) in [(&mut vr, &robot_level), (&mut all_r, &robot_level)] {
                dst.accuracy.extend(&src.accuracy);
                dst.precision.extend(&src.precision);
                dst.recall.extend(&src.recall);
                dst.detected.extend(&src.detected);
                dst.z_in.extend(&src.z_in);
                dst.z_out.extend(&src.z_out);
                dst.undefined += src.undefined;
            }
            for dst in [&mut vs, &mut all_s] {
                dst.accuracy.push(mean(robot_level.accuracy.iter().copied()));
                dst.precision.push(mean(robot_level.precision.iter().copied()));
                dst.recall.push(mean(robot_level.recall.iter().copied()));
                dst.detected.push(mean(robot_level.detected.iter().copied()));
                dst.z_in.push(mean(robot_level.z_in.iter().copied()));
                dst.z_out.push(mean(robot_level.z_out.iter().copied()));
                dst.undefined += robot_level.undefined;
            }
            case_detected += mean(robot_level.detected.iter().copied());
        }
        let damages = runs[0].damages;
        damages_total += damages;
        detected_total += case_detected / runs.len() as f64;
        runs_total += runs.len();
        by_robot.push(vr.row(Some(c), damages, runs.len()));
        by_seed.push(vs.row(Some(c), damages, runs.len()));
    }
    for (rows, vals) in [(&mut by_robot, &all_r), (&mut by_seed, &all_s)] {
        let mut overall = vals.row(None, damages_total, runs_total);
        overall.accuracy.mean = pooled.accuracy();
        overall.precision.mean = pooled.precision();
        overall.recall.mean = pooled.recall();
        overall.detected.mean = detected_total;
        rows.push(overall);
    }
    (by_robot, by_seed)
}

fn table_csv(rows: &[CaseRow]) -> String {
    let mut s = String::from(
        "case,damages,runs,estimates,accuracy_mean,accuracy_std,precision_mean,precision_std,recall_mean,recall_std,detected_mean,detected_std,z_in_mean,z_in_std,z_out_mean,z_out_std,precision_undefined\n",
    );
    for r in rows {
        let case = r.case.map_or("overall".to_string(), |c| c.to_string());
        let cols: Vec<String> = [r.accuracy, r.precision, r.recall, r.detected, r.z_in, r.z_out]
            .iter()
            .flat_map(|m| [format!("{:.6}", m.mean), format!("{:.6}", m.std)])
            .collect();
        let _ = writeln!(s, "{case},{},{},{},{},{}", r.damages, r.runs, r.estimates, cols.join(","), r.precision_undefined);
    }
    s
}

fn read_grid(path: &Path) -> Option<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).ok()?;
    text.lines().map(|l| l.split(',').map(|v| v.parse().ok()).collect()).collect()
}

/// Mean z-score map per case over its runs, as plain CSV grids.
fn mean_z_maps(inspect_dir: &Path, out_dir: &Path, records: &[InspectRecord]) -> Result<()> {
    let mut cases: Vec<usize> = records.iter().map(|r| r.case).collect();
    cases.dedup();
    for c in cases {
        let mut sum: Option<Vec<Vec<f64>>> = None;
        let mut k = 0.0;
        for r in records.iter().filter(|r| r.case == c) {
            let path = inspect_dir.join(format!("case{c:02}")).join(format!("seed{}", r.seed)).join("z.csv");
            if let Some(g) = read_grid(&path) {
                match &mut sum {
                    Some(s) if s.len() == g.len() => s.iter_mut().zip(&g).for_each(|(a, b)| a.iter_mut().zip(b).for_each(|(x, y)| *x += y)),
                    Some(_) => continue,
                    None => sum = Some(g),
                }
                k += 1.0;
            }
        }
        if let Some(s) = sum {
            let text: String = s
                .iter()
                .map(|row| row.iter().map(|v| format!("{:.6e}", v / k)).collect::<Vec<_>>().join(",") + "\n")
                .collect();
            write_text(&out_dir.join(format!("case{c:02}_mean_z.csv")), &text)?;
        }
    }
    Ok(())
}

/// Writes `table.csv` (spread over robots), `table_by_seed.csv` and
/// `summary.json` into `out_dir`.
pub fn write_report(inspect_dir: &Path, out_dir: &Path) -> Result<ReportSummary> {
    let (records, missing) = load_records(inspect_dir);
    if records.is_empty() {
        return Err(Error::NoRuns(inspect_dir.display().to_string()));
    }
    let (by_robot, by_seed) = aggregate(&records);
    write_text(&out_dir.join("table.csv"), &table_csv(&by_robot))?;
    write_text(&out_dir.join("table_by_seed.csv"), &table_csv(&by_seed))?;
    let summary = ReportSummary { runs: records.len(), missing, by_robot, by_seed };
    write_json(&out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Report over an output root: inspection tables, mean z maps, and the
/// exploration curves when present.
pub fn report(root: &Path) -> Result<ReportSummary> {
    let inspect = root.join("inspect");
    let out = root.join("report");
    let summary = write_report(&inspect, &out)?;
    let (records, _) = load_records(&inspect);
    mean_z_maps(&inspect, &out, &records)?;
    if let Ok(text) = fs::read_to_string(root.join("explore").join("summary.csv")) {
        write_text(&out.join("exploration_variance.csv"), &text)?;
    }
    for m in &summary.missing {
        log::warn!("missing or failed run: {m}");
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::damage::MetricsReport;
    use crate::experiment::stages::GroupResult;

    fn record(case: usize, seed: u64, tp: usize, fp: usize, tn: usize, fn_: usize, robots: usize) -> InspectRecord {
        let confusion = Confusion { tp, fp, tn, fn_ };
        let metrics = MetricsReport {
            accuracy: confusion.accuracy(),
            precision: confusion.precision(),
            recall: confusion.recall(),
            precision_undefined: tp + fp == 0,
            detected: (tp > 0) as usize,
            total: 1,
            confusion,
        };
        InspectRecord {
            case,
            seed,
            damages: 1,
            grid_cells: tp + fp + tn + fn_,
            payload_bytes: 0,
            expected_payload_bytes: 0,
            bands: 2,
            bins_per_band: 150,
            reduction_ratio: 0.1,
            groups: vec![GroupResult {
                robots: (0..robots).collect(),
                samples: 10,
                metrics,
                z_in: 1.0,
                z_out: 0.0,
                fdd_warnings: vec![false, false],
                baseline_mac: vec![1.0, 1.0],
            }],
        }
    }

    #[test]
    fn single_run_has_zero_spread() {
        let (rows, seeds) = aggregate(&[record(0, 1, 5, 5, 80, 10, 1)]);
        assert_eq!(rows[0].accuracy.std, 0.0);
        assert_eq!(seeds[0].recall.std, 0.0);
        assert!((rows[0].accuracy.mean - 0.85).abs() < 1e-12);
    }

    #[test]
    fn overall_row_pools_counts() {
        let recs = [record(0, 1, 10, 0, 90, 0, 1), record(1, 1, 0, 0, 9990, 10, 1)];
        let (rows, _) = aggregate(&recs);
        let overall = rows.last().unwrap();
        assert_eq!(overall.case, None);
        assert!((overall.accuracy.mean - 10090.0 / 10100.0).abs() < 1e-12);
        assert!((overall.recall.mean - 0.5).abs() < 1e-12);
        assert_eq!(overall.damages, 2);
        assert!((overall.detected.mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn robots_weigh_in_the_robot_table_only() {
        let recs = [record(0, 1, 10, 0, 90, 0, 4), record(0, 2, 0, 0, 90, 10, 1)];
        let (rows, seeds) = aggregate(&recs);
        assert!((rows[0].recall.mean - 0.8).abs() < 1e-12);
        assert!((seeds[0].recall.mean - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_directory_reports_no_runs() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(write_report(dir.path(), dir.path()), Err(Error::NoRuns(_))));
    }
}
