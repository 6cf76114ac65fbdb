//! Experiment configuration, stored as TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};
use crate::gp::{GpHyper, OptimizeOptions};

use super::pipeline::PipelineConfig;
use super::scenario::ScenarioParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExploreStage {
    pub swarm_sizes: Vec<usize>,
    pub radii: Vec<f64>,
}

impl Default for ExploreStage {
    fn default() -> Self {
        Self { swarm_sizes: (1..=10).collect(), radii: vec![0.05, 0.10, 0.15] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizeStage {
    /// Undamaged missions whose identified modes are fitted.
    pub runs: usize,
    pub options: OptimizeOptions,
}

impl Default for OptimizeStage {
    fn default() -> Self {
        Self { runs: 10, options: OptimizeOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InspectStage {
    pub cases: usize,
    /// Scenario `k` is generated from `scenario_seed + k`.
    pub scenario_seed: u64,
    pub scenario: ScenarioParams,
    /// Interpolation hyperparameters per mode, used as given. When absent
    /// the optimize stage's result is loaded (running it if needed) and its
    /// length scales halved.
    pub hypers: Option<Vec<GpHyper>>,
}

impl Default for InspectStage {
    fn default() -> Self {
        Self { cases: 10, scenario_seed: 0, scenario: ScenarioParams::default(), hypers: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepStage {
    pub swarm_sizes: Vec<usize>,
    pub radii: Vec<f64>,
}

impl Default for SweepStage {
    fn default() -> Self {
        Self { swarm_sizes: vec![5], radii: vec![0.05, 0.10, 0.15] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    /// Parallel runs; 0 uses every available core.
    pub workers: usize,
    /// Keep synthesized fields on disk next to the eigensolve cache.
    pub cache_fields: bool,
    pub pipeline: PipelineConfig,
    pub explore: ExploreStage,
    pub optimize: OptimizeStage,
    pub inspect: InspectStage,
    pub sweep: SweepStage,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: (0..10).collect(),
            output: PathBuf::from("runs"),
            workers: 0,
            cache_fields: false,
            pipeline: PipelineConfig::default(),
            explore: ExploreStage::default(),
            optimize: OptimizeStage::default(),
            inspect: InspectStage::default(),
            sweep: SweepStage::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return invalid("at least one seed is required");
        }
        let p = &self.pipeline;
        p.plate.validate()?;
        p.mission.nav.validate()?;
        p.mission.exploration.validate()?;
        p.field.damping_ratios(2)?;
        if p.mission.n_robots == 0 {
            return invalid("n_robots must be at least 1");
        }
        if (p.mission.side - p.plate.side_length).abs() > 1e-12 {
            return invalid("mission side must match the plate side length");
        }
        if !(p.delta_f > 0.0 && p.window_length > 0.0 && p.window_length <= p.field.duration) {
            return invalid("band width must be positive and the window must fit the field duration");
        }
        if !(0.0..=1.0).contains(&p.mission.comms.drop_probability) {
            return invalid("drop probability must lie in [0, 1]");
        }
        if !(p.damage.theta_z.is_finite() && p.damage.spacing > 0.0) {
            return invalid("damage threshold must be finite and spacing positive");
        }
        if self.explore.swarm_sizes.contains(&0) || self.sweep.swarm_sizes.contains(&0) {
            return invalid("swarm sizes must be positive");
        }
        if let Some(h) = &self.inspect.hypers {
            if h.len() != 2 {
                return invalid("inspect.hypers needs one entry per retained mode");
            }
            h.iter().try_for_each(|h| h.validate())?;
        }
        if self.optimize.runs == 0 || self.inspect.cases == 0 {
            return invalid("optimize.runs and inspect.cases must be positive");
        }
        Ok(())
    }

    /// The configuration without its output root, which does not affect
    /// any result.
    pub fn portable(&self) -> Self {
        Self { output: PathBuf::new(), ..self.clone() }
    }

    /// Hash of the serialized portable configuration, hex.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.portable()).unwrap_or_default());
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml("seeds = [3]\n[pipeline.mission]\nn_robots = 2\n").unwrap();
        assert_eq!(cfg.seeds, vec![3]);
        assert_eq!(cfg.pipeline.mission.n_robots, 2);
        assert_eq!(cfg.pipeline.delta_f, 10.0);
    }

    #[test]
    fn out_of_bounds_values_are_rejected() {
        assert!(ExperimentConfig::from_toml("seeds = []").is_err());
        assert!(ExperimentConfig::from_toml("[pipeline.mission]\nn_robots = 0\n").is_err());
        assert!(ExperimentConfig::from_toml("[pipeline.plate]\npoisson = 0.7\n").is_err());
        assert!(ExperimentConfig::from_toml("[pipeline]\nwindow_length = 45.0\n").is_err());
        assert!(ExperimentConfig::from_toml("unknown_key = 1\nseeds = [").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.seeds.push(99);
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
        let c = ExperimentConfig { output: "elsewhere".into(), ..a.clone() };
        assert_eq!(a.hash(), c.hash());
    }
}
