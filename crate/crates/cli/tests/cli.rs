use std::fs;
use std::process::{Command, Output};

fn swarmshm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swarmshm")).args(args).env_remove("SWARMSHM_OUTPUT").output().unwrap()
}

#[test]
fn config_prints_the_resolved_toml() {
    let out = swarmshm(&["config", "--robots", "7", "--seeds", "4,5", "--radius", "0.1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("seeds = [\n    4,\n    5,\n]") || text.contains("seeds = [4, 5]"), "{text}");
    assert!(text.contains("n_robots = 7"));
    assert!(text.contains("r_t = 0.1"));
}

#[test]
fn config_file_is_read_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    fs::write(&path, "seeds = [9]\n[pipeline.mission]\nn_robots = 2\n").unwrap();
    let out = swarmshm(&["config", "-c", path.to_str().unwrap(), "--robots", "4"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("n_robots = 4"));
    assert!(text.contains('9'));
}

#[test]
fn invalid_settings_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "[pipeline.plate]\npoisson = 0.7\n").unwrap();
    assert_eq!(swarmshm(&["config", "-c", path.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(swarmshm(&["config", "--robots", "0"]).status.code(), Some(2));
    assert!(!swarmshm(&["explore", "--sizes", "x"]).status.success());
}

#[test]
fn report_without_runs_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = swarmshm(&["report", "-o", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn modes_and_explore_write_their_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_swarmshm"))
        .args(["modes", "--grid", "51"])
        .env("SWARMSHM_OUTPUT", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let freqs = fs::read_to_string(dir.path().join("modes/frequencies.json")).unwrap();
    assert!(freqs.contains("analytic_frequency"));

    let o = dir.path().to_str().unwrap();
    let out = swarmshm(&["explore", "-o", o, "--sizes", "2", "--radii", "0.1,0.15", "--seeds", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("explore/variance.csv")).unwrap();
    assert!(csv.starts_with("time,swarm_size,r_t,seed,max_variance,observed_variance\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 61);
}
