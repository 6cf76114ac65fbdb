use std::fs;
use std::path::Path;

use proptest::prelude::*;
use swarmshm::experiment::scenario::{generate_scenario, ScenarioParams};
use swarmshm::experiment::{report, run_explore, run_inspect, run_sweep, ExperimentConfig, Manifest};
use swarmshm::gp::GpHyper;
use swarmshm::grid::Grid;
use swarmshm::Error;

fn small(output: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig { seeds: vec![0, 1], output: output.to_path_buf(), workers: 1, ..ExperimentConfig::default() };
    cfg.pipeline.plate.grid_n = 51;
    cfg.pipeline.mission.n_robots = 3;
    cfg.explore.swarm_sizes = vec![1, 3];
    cfg.explore.radii = vec![0.15];
    cfg.sweep.swarm_sizes = vec![2];
    cfg.sweep.radii = vec![0.1];
    cfg.inspect.cases = 2;
    cfg.inspect.hypers = Some(vec![
        GpHyper { sigma_v: 0.3, length_scale: 0.24, sigma_n: 3.5e-4 },
        GpHyper { sigma_v: 0.9, length_scale: 0.15, sigma_n: 6e-4 },
    ]);
    cfg
}

#[test]
fn damage_counts_are_uniform() {
    let grid = Grid::new(101, 1.0).unwrap();
    let params = ScenarioParams::default();
    let mut hist = [0usize; 3];
    for seed in 0..1000 {
        hist[generate_scenario(&grid, &params, seed).unwrap().len() - 1] += 1;
    }
    // Binomial(1000, 1/3): 99% two-sided band is about ±2.576σ, σ ≈ 14.9.
    for h in hist {
        assert!((295..=372).contains(&h), "{hist:?}");
    }
}

#[test]
fn sweep_runs_reproduce_from_their_manifests_and_resume() {
    let a = tempfile::tempdir().unwrap();
    let cfg = small(a.path());
    assert!(run_sweep(&cfg).unwrap().ok());
    let run = a.path().join("sweep").join("n02_rt0.100_seed1");
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.config_hash, cfg.hash());

    let b = tempfile::tempdir().unwrap();
    let mut again = manifest.config.clone();
    again.output = b.path().to_path_buf();
    again.seeds = vec![manifest.seed.unwrap()];
    again.sweep.swarm_sizes = vec![manifest.swarm_size.unwrap()];
    again.sweep.radii = vec![manifest.r_t.unwrap()];
    assert!(run_sweep(&again).unwrap().ok());
    let rerun = b.path().join("sweep").join("n02_rt0.100_seed1");
    for f in ["variance.csv", "events.jsonl"] {
        assert_eq!(fs::read(run.join(f)).unwrap(), fs::read(rerun.join(f)).unwrap(), "{f}");
    }

    // A finished run is skipped: a marker written into it survives.
    fs::write(run.join("events.jsonl"), "kept\n").unwrap();
    assert!(run_sweep(&cfg).unwrap().ok());
    assert_eq!(fs::read_to_string(run.join("events.jsonl")).unwrap(), "kept\n");
}

#[test]
fn explore_is_deterministic_and_shaped() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let s = run_explore(&small(a.path())).unwrap();
    assert_eq!(s.runs, 4);
    run_explore(&small(b.path())).unwrap();
    for f in ["variance.csv", "summary.csv", "manifest.json"] {
        assert_eq!(fs::read(a.path().join("explore").join(f)).unwrap(), fs::read(b.path().join("explore").join(f)).unwrap(), "{f}");
    }
    let text = fs::read_to_string(a.path().join("explore").join("variance.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    // 1800 s at 30 s spacing, both ends included, for 4 missions.
    assert_eq!(rows.len(), 4 * 61);
    assert!(rows.iter().all(|r| r.split(',').count() == 6));
}

#[test]
fn inspect_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let s = run_inspect(&cfg).unwrap();
    assert!(s.ok(), "{:?}", s.failed);
    assert_eq!(s.runs, 4);
    let inspect = dir.path().join("inspect");
    for f in ["table.csv", "hypers.json", "case00/regions.json", "case01/seed1/metrics.json", "case01/seed1/z.csv"] {
        assert!(inspect.join(f).exists(), "{f}");
    }
    let summary = report(dir.path()).unwrap();
    assert_eq!(summary.runs, 4);
    assert!(summary.missing.is_empty());
    let table = fs::read_to_string(dir.path().join("report").join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 + 1);

    // A run that lost its metrics shows up as missing.
    fs::remove_file(inspect.join("case01/seed0/metrics.json")).unwrap();
    let partial = report(dir.path()).unwrap();
    assert_eq!(partial.runs, 3);
    assert_eq!(partial.missing.len(), 1);
}

#[test]
fn report_without_runs_fails() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(report(dir.path()), Err(Error::NoRuns(_))));
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn configs_round_trip_through_toml(
        seeds in prop::collection::vec(0u64..1_000_000, 1..5),
        robots in 1usize..12,
        r_t in 0.02f64..0.3,
        theta_z in 0.5f64..4.0,
        drop in 0.0f64..1.0,
        workers in 0usize..8,
    ) {
        let mut cfg = ExperimentConfig { seeds, workers, ..ExperimentConfig::default() };
        cfg.pipeline.mission.n_robots = robots;
        cfg.pipeline.mission.nav.r_t = r_t;
        cfg.pipeline.mission.comms.drop_probability = drop;
        cfg.pipeline.damage.theta_z = theta_z;
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn scenario_regions_respect_bounds(seed in 0u64..100_000) {
        let grid = Grid::new(101, 1.0).unwrap();
        let regions = generate_scenario(&grid, &ScenarioParams::default(), seed).unwrap();
        let mut seen = vec![false; grid.len()];
        for r in &regions {
            prop_assert!(r.is_connected(&grid));
            let area = r.area_mm2(&grid);
            prop_assert!((2500.0..=25_000.0).contains(&area));
            prop_assert!((0.0005..=0.001).contains(&r.depth));
            for &c in &r.cells {
                prop_assert!(!seen[c]);
                seen[c] = true;
            }
        }
    }
}
