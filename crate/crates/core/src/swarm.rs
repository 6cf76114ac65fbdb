//! Discrete-time simulation of the exploring swarm.
//!
//! Each robot samples, shares the sample, picks the most uncertain nearby
//! point as its next target, drives there while dodging neighbours, and
//! stops when no sufficiently uncertain point is left within reach. A single
//! coordinator advances all robots tick by tick in id order, so a run is a
//! pure function of its configuration and seed.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gp::{self, GpHyper, VarianceTracker};
use crate::grid::{distance, Point};
use crate::oma::{extract_bands, window_fft, SampleSet, SpectrumSample};
use crate::rng;
use crate::vibration::{sample_at, SensorModel, VibrationField, Window};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NavParams {
    /// Target radius, m.
    pub r_t: f64,
    /// Estimation radius, m. Defaults to `r_t + 0.1`.
    pub r_e: Option<f64>,
    /// Radial and tangential candidate steps.
    pub s_t: usize,
    pub theta_sigma: f64,
    /// Minimum distance between samples, m.
    pub theta_x: f64,
    /// m/s.
    pub speed: f64,
    /// rad/s.
    pub turn_rate: f64,
    /// m.
    pub body_length: f64,
    /// Obstacle trigger range in body lengths.
    pub trigger_lengths: f64,
    /// Half-angle of the forward sensing cone, rad.
    pub cone_half_angle: f64,
    /// Avoidance drive distance range, m.
    pub avoid_distance: (f64, f64),
    /// Triggers per leg before the robot re-plans from where it is.
    pub max_avoidance: usize,
    /// Sampling duration, s.
    pub sample_time: f64,
    /// Battery budget, s.
    pub battery: f64,
    /// Simulation step, s.
    pub dt: f64,
}

impl Default for NavParams {
    fn default() -> Self {
        Self {
            r_t: 0.15,
            r_e: None,
            s_t: 10,
            theta_sigma: 0.025,
            theta_x: 0.01,
            speed: 0.05,
            turn_rate: PI / 2.0,
            body_length: 0.04,
            trigger_lengths: 1.5,
            cone_half_angle: PI / 4.0,
            avoid_distance: (0.05, 0.2),
            max_avoidance: 5,
            sample_time: 15.0,
            battery: 1800.0,
            dt: 0.1,
        }
    }
}

impl NavParams {
    pub fn r_e(&self) -> f64 {
        self.r_e.unwrap_or(self.r_t + 0.1)
    }

    pub fn trigger_range(&self) -> f64 {
        self.trigger_lengths * self.body_length
    }

    fn ticks(&self, seconds: f64) -> u64 {
        (seconds / self.dt).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_t > 0.0 && self.r_t < self.r_e()) {
            return invalid(format!("need 0 < r_t < r_e, got r_t = {} and r_e = {}", self.r_t, self.r_e()));
        }
        if self.s_t < 2 {
            return invalid("s_t must be at least 2");
        }
        let positive = [self.theta_sigma, self.speed, self.turn_rate, self.body_length, self.sample_time, self.battery, self.dt];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.theta_x >= 0.0) {
            return invalid("navigation rates, times and thresholds must be positive");
        }
        if !(self.avoid_distance.0 > 0.0 && self.avoid_distance.1 > self.avoid_distance.0) {
            return invalid("avoidance distance range must be increasing and positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommsParams {
    /// Chance that a given receiver misses a broadcast.
    pub drop_probability: f64,
    /// Std of the Gaussian error on recorded sample positions, m.
    pub position_noise: f64,
}

impl Default for CommsParams {
    fn default() -> Self {
        Self { drop_probability: 0.0, position_noise: 0.0 }
    }
}

/// Polar candidates `r = scale·m·r_t/s_t, θ = 2πn/s_t` for `m, n = 1..=s_t`
/// around `x`, `m`-major, keeping only points on the plate.
pub fn candidate_targets(x: Point, r_t: f64, s_t: usize, scale: f64, side: f64) -> Vec<Point> {
    let mut out = Vec::with_capacity(s_t * s_t);
    for m in 1..=s_t {
        let r = scale * m as f64 * r_t / s_t as f64;
        for n in 1..=s_t {
            let th = 2.0 * PI * n as f64 / s_t as f64;
            let p = [x[0] + r * th.cos(), x[1] + r * th.sin()];
            if (0.0..=side).contains(&p[0]) && (0.0..=side).contains(&p[1]) {
                out.push(p);
            }
        }
    }
    out
}

/// Outcome of a target search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub target: Option<Point>,
    /// Largest variance among the base-radius candidates: the uncertainty the
    /// robot observes around itself.
    pub observed: f64,
}

/// The most uncertain candidate around `x` that clears both thresholds,
/// trying the doubled radii once when nothing qualifies at the base radii.
/// Ties go to the earliest candidate.
pub fn select_target(samples: &[Point], x: Point, nav: &NavParams, hyper: &GpHyper, side: f64) -> Result<Selection> {
    let mut observed = 0.0;
    for scale in [1.0, 2.0] {
        let cands = candidate_targets(x, nav.r_t, nav.s_t, scale, side);
        if cands.is_empty() {
            continue;
        }
        let local: Vec<Point> = samples.iter().copied().filter(|s| distance(*s, x) < scale * nav.r_e()).collect();
        let var = gp::posterior_variance(&local, &cands, hyper)?;
        if scale == 1.0 {
            observed = var.iter().copied().fold(0.0, f64::max);
        }
        let mut best: Option<(usize, f64)> = None;
        for (k, (&c, &v)) in cands.iter().zip(&var).enumerate() {
            if v <= nav.theta_sigma {
                continue;
            }
            if samples.iter().any(|s| distance(*s, c) < nav.theta_x) {
                continue;
            }
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((k, v));
            }
        }
        if let Some((k, _)) = best {
            return Ok(Selection { target: Some(cands[k]), observed });
        }
    }
    Ok(Selection { target: None, observed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Navigating,
    Sampling,
    Estimating,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Maneuver {
    pub heading: f64,
    pub remaining: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub id: usize,
    pub position: Point,
    pub heading: f64,
    /// Remaining battery in simulation ticks.
    pub battery_ticks: u64,
    pub dataset: SampleSet,
    pub phase: Phase,
    pub collision_count_this_leg: usize,
    pub target: Option<Point>,
    pub maneuver: Option<Maneuver>,
    /// Variance seen around the robot at its latest target search.
    pub observed_variance: f64,
    sampling_until: u64,
    samples_taken: u64,
}

impl RobotState {
    pub fn new(id: usize, position: Point, heading: f64, battery_ticks: u64) -> Self {
        Self {
            id,
            position,
            heading,
            battery_ticks,
            dataset: SampleSet::default(),
            phase: Phase::Navigating,
            collision_count_this_leg: 0,
            target: Some(position),
            maneuver: None,
            observed_variance: f64::INFINITY,
            sampling_until: 0,
            samples_taken: 0,
        }
    }

    pub fn battery_remaining(&self, nav: &NavParams) -> f64 {
        self.battery_ticks as f64 * nav.dt
    }
}

fn wrap(a: f64) -> f64 {
    let mut a = (a + PI).rem_euclid(2.0 * PI) - PI;
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Turns toward `goal` at the turn rate; true once aligned.
fn turn_toward(state: &mut RobotState, goal: f64, max_turn: f64) -> bool {
    let err = wrap(goal - state.heading);
    if err.abs() <= max_turn {
        state.heading = wrap(goal);
        true
    } else {
        state.heading = wrap(state.heading + max_turn * err.signum());
        false
    }
}

fn clamp_to_plate(p: Point, side: f64) -> (Point, bool) {
    let q = [p[0].clamp(0.0, side), p[1].clamp(0.0, side)];
    (q, q != p)
}

/// Distance along `heading` from `p` to the plate boundary.
fn wall_distance(p: Point, heading: f64, side: f64) -> f64 {
    let (s, c) = heading.sin_cos();
    let mut d = f64::INFINITY;
    if c > 1e-12 {
        d = d.min((side - p[0]) / c);
    } else if c < -1e-12 {
        d = d.min(-p[0] / c);
    }
    if s > 1e-12 {
        d = d.min((side - p[1]) / s);
    } else if s < -1e-12 {
        d = d.min(-p[1] / s);
    }
    d
}

/// Whether an obstacle sits in the forward cone, within trigger range and
/// nearer than the target.
pub fn obstacle_ahead(state: &RobotState, target: Point, neighbors: &[Point], nav: &NavParams, side: f64) -> bool {
    let range = nav.trigger_range();
    let to_target = distance(state.position, target);
    let neighbor = neighbors.iter().any(|&q| {
        let d = distance(state.position, q);
        if d > range || d >= to_target || d == 0.0 {
            return false;
        }
        let bearing = (q[1] - state.position[1]).atan2(q[0] - state.position[0]);
        wrap(bearing - state.heading).abs() <= nav.cone_half_angle
    });
    let wall = wall_distance(state.position, state.heading, side);
    neighbor || (wall <= range && wall < to_target)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motion {
    Moving,
    Arrived,
    /// An avoidance maneuver just started.
    Avoiding,
    /// Too many avoidance triggers in this leg.
    Replan,
}

/// One tick of turn-then-drive motion toward the current target, with the
/// randomized avoidance maneuver.
pub fn step_motion(state: &mut RobotState, neighbors: &[Point], nav: &NavParams, side: f64, rng: &mut ChaCha8Rng) -> Motion {
    let dt = nav.dt;
    let max_turn = nav.turn_rate * dt;
    if let Some(mut m) = state.maneuver {
        if turn_toward(state, m.heading, max_turn) {
            let step = m.remaining.min(nav.speed * dt);
            let (s, c) = state.heading.sin_cos();
            let (p, hit) = clamp_to_plate([state.position[0] + step * c, state.position[1] + step * s], side);
            state.position = p;
            m.remaining -= step;
            state.maneuver = if hit || m.remaining <= 1e-12 { None } else { Some(m) };
        } else {
            state.maneuver = Some(m);
        }
        return Motion::Moving;
    }
    let Some(target) = state.target else {
        return Motion::Arrived;
    };
    let to_target = distance(state.position, target);
    if to_target <= 1e-12 {
        state.position = target;
        return Motion::Arrived;
    }
    let goal = (target[1] - state.position[1]).atan2(target[0] - state.position[0]);
    if obstacle_ahead(state, target, neighbors, nav, side) {
        state.collision_count_this_leg += 1;
        if state.collision_count_this_leg >= nav.max_avoidance {
            return Motion::Replan;
        }
        let heading = rng.random_range(-PI..PI);
        let remaining = rng.random_range(nav.avoid_distance.0..nav.avoid_distance.1);
        state.maneuver = Some(Maneuver { heading, remaining });
        return Motion::Avoiding;
    }
    if !turn_toward(state, goal, max_turn) {
        return Motion::Moving;
    }
    let step = nav.speed * dt;
    if to_target <= step {
        state.position = target;
        return Motion::Arrived;
    }
    let (s, c) = state.heading.sin_cos();
    state.position = clamp_to_plate([state.position[0] + step * c, state.position[1] + step * s], side).0;
    Motion::Moving
}

/// Which part of the field record each sample reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowPolicy {
    /// One random offset per run, shared by every sample.
    #[default]
    PerRun,
    /// One random offset per robot.
    PerRobot,
    /// A fresh offset for every sample.
    PerSample,
}

/// Produces the shared spectral payload for a sample taken at `at`.
pub trait Acquisition: Sync {
    fn acquire(&self, robot: usize, sample_index: u64, at: Point) -> Result<SpectrumSample>;
}

/// Records locations only; enough for exploration studies.
pub struct LocationOnly;

impl Acquisition for LocationOnly {
    fn acquire(&self, _robot: usize, _sample_index: u64, at: Point) -> Result<SpectrumSample> {
        Ok(SpectrumSample { location: at, window_id: 0, bands: Vec::new() })
    }
}

/// Reads the synthesized field through the accelerometer model and keeps
/// the bands around each frequency.
pub struct FieldAcquisition<'a> {
    pub field: &'a VibrationField,
    pub sensor: SensorModel,
    pub frequencies: Vec<f64>,
    pub delta_f: f64,
    pub window_length: f64,
    pub policy: WindowPolicy,
    pub seed: u64,
}

impl FieldAcquisition<'_> {
    /// Start sample of the window used by this sample.
    pub fn window_start(&self, robot: usize, sample_index: u64) -> Result<u64> {
        let total = self.field.len() as u64;
        let len = (self.window_length * self.field.sample_rate).round() as u64;
        if len == 0 || len > total {
            return invalid(format!("window of {} s does not fit the field", self.window_length));
        }
        let mut r = match self.policy {
            WindowPolicy::PerRun => rng::stream(self.seed, "window", &[]),
            WindowPolicy::PerRobot => rng::stream(self.seed, "window", &[robot as u64]),
            WindowPolicy::PerSample => rng::stream(self.seed, "window", &[robot as u64, sample_index]),
        };
        Ok(r.random_range(0..=total - len))
    }
}

impl Acquisition for FieldAcquisition<'_> {
    fn acquire(&self, robot: usize, sample_index: u64, at: Point) -> Result<SpectrumSample> {
        let start = self.window_start(robot, sample_index)?;
        let window = Window { start: start as f64 / self.field.sample_rate, length: self.window_length };
        let noise_seed: u64 = rng::stream(self.seed, "sensor", &[robot as u64, sample_index]).random();
        let a = sample_at(self.field, at, window, &self.sensor, noise_seed)?;
        let spectrum = window_fft(&a, self.field.sample_rate)?;
        let bands = extract_bands(&spectrum, &self.frequencies, self.delta_f)?;
        Ok(SpectrumSample { location: at, window_id: start as u32, bands })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionConfig {
    pub n_robots: usize,
    pub side: f64,
    pub nav: NavParams,
    pub comms: CommsParams,
    pub exploration: GpHyper,
    /// Probe grid points per axis for the global variance log.
    pub probe_n: usize,
    /// Seconds between probe-grid variance records.
    pub probe_interval: f64,
    /// Keep-out margin from the edges for start positions, m.
    pub start_margin: f64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            n_robots: 5,
            side: 1.0,
            nav: NavParams::default(),
            comms: CommsParams::default(),
            exploration: GpHyper::EXPLORATION,
            probe_n: 21,
            probe_interval: 30.0,
            start_margin: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Start { x: f64, y: f64 },
    Sample { x: f64, y: f64, window_id: u32 },
    Broadcast { delivered: usize, dropped: usize },
    Discard { x: f64, y: f64, reason: String },
    Target { x: f64, y: f64, observed: f64 },
    Avoid { count: usize },
    Retarget { reason: String },
    Estimate { samples: usize, observed: f64 },
    Done { reason: String },
    Probe { max_variance: f64, observed: f64, samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robot: Option<usize>,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone)]
pub struct MissionResult {
    pub robots: Vec<RobotState>,
    pub events: Vec<Event>,
    /// `(time s, max probe variance)`, one row per probe interval up to the
    /// battery budget.
    pub probes: Vec<(f64, f64)>,
    /// `(time s, largest variance currently observed by any robot)` on the
    /// same cadence. Robots keep their last value once done.
    pub observed: Vec<(f64, f64)>,
    /// Every committed sample location, in commit order.
    pub committed: Vec<Point>,
}

impl MissionResult {
    pub fn events_jsonl(&self) -> String {
        let mut s = String::new();
        for e in &self.events {
            s.push_str(&serde_json::to_string(e).unwrap_or_default());
            s.push('\n');
        }
        s
    }

    pub fn final_max_variance(&self) -> f64 {
        self.probes.last().map_or(f64::NAN, |p| p.1)
    }

    /// First time the robots' observed variance is at or below `threshold`.
    pub fn observed_below(&self, threshold: f64) -> Option<f64> {
        self.observed.iter().find(|p| p.1 <= threshold).map(|p| p.0)
    }
}

fn time_of(tick: u64, dt: f64) -> f64 {
    (tick as f64 * dt * 1e6).round() / 1e6
}

fn probe_grid(n: usize, side: f64) -> Vec<Point> {
    let mut v = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            v.push([side * i as f64 / (n - 1) as f64, side * j as f64 / (n - 1) as f64]);
        }
    }
    v
}

fn start_positions(cfg: &MissionConfig, seed: u64) -> Result<Vec<(Point, f64)>> {
    let mut r = rng::stream(seed, "start", &[]);
    let lo = cfg.start_margin;
    let hi = cfg.side - cfg.start_margin;
    if !(hi > lo) {
        return invalid("start margin leaves no room on the plate");
    }
    let clearance = 2.0 * cfg.nav.body_length;
    let mut out: Vec<(Point, f64)> = Vec::with_capacity(cfg.n_robots);
    let mut attempts = 0;
    while out.len() < cfg.n_robots {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::RetryBudget { attempts });
        }
        let p = [r.random_range(lo..hi), r.random_range(lo..hi)];
        if out.iter().all(|(q, _)| distance(p, *q) >= clearance) {
            out.push((p, r.random_range(-PI..PI)));
        }
    }
    Ok(out)
}

/// Runs the mission until every robot is done or the battery budget ends.
pub fn run_mission(cfg: &MissionConfig, acquisition: &dyn Acquisition, seed: u64) -> Result<MissionResult> {
    if cfg.n_robots == 0 {
        return invalid("a mission needs at least one robot");
    }
    cfg.nav.validate()?;
    cfg.exploration.validate()?;
    if cfg.probe_n < 2 || !(cfg.probe_interval > 0.0) {
        return invalid("probe grid needs at least two points per axis and a positive interval");
    }
    if !(0.0..=1.0).contains(&cfg.comms.drop_probability) || !(cfg.comms.position_noise >= 0.0) {
        return invalid("drop probability must be in [0, 1] and position noise non-negative");
    }
    let nav = &cfg.nav;
    let side = cfg.side;
    let budget = nav.ticks(nav.battery);
    let sample_ticks = nav.ticks(nav.sample_time);
    let probe_every = nav.ticks(cfg.probe_interval).max(1);

    let mut robots: Vec<RobotState> = start_positions(cfg, seed)?
        .into_iter()
        .enumerate()
        .map(|(id, (p, h))| RobotState::new(id, p, h, budget))
        .collect();
    let mut motion_rng: Vec<ChaCha8Rng> = (0..cfg.n_robots).map(|i| rng::stream(seed, "motion", &[i as u64])).collect();
    let mut comms_rng = rng::stream(seed, "comms", &[]);
    let noise = Normal::new(0.0, cfg.comms.position_noise.max(0.0)).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut tracker = VarianceTracker::new(cfg.exploration, probe_grid(cfg.probe_n, side))?;
    let mut events = Vec::new();
    let mut probes = Vec::new();
    let mut observed = Vec::new();
    let mut committed: Vec<Point> = Vec::new();

    for r in &robots {
        events.push(Event { t: 0.0, robot: Some(r.id), kind: EventKind::Start { x: r.position[0], y: r.position[1] } });
    }

    let mut tick: u64 = 0;
    loop {
        if tick.is_multiple_of(probe_every) {
            let mv = tracker.max_variance();
            let ov = swarm_observed(&robots, &cfg.exploration);
            probes.push((time_of(tick, nav.dt), mv));
            observed.push((time_of(tick, nav.dt), ov));
            events.push(Event { t: time_of(tick, nav.dt), robot: None, kind: EventKind::Probe { max_variance: mv, observed: ov, samples: tracker.len() } });
        }
        if tick >= budget || robots.iter().all(|r| r.phase == Phase::Done) {
            break;
        }
        let t = time_of(tick, nav.dt);
        for id in 0..robots.len() {
            let phase = robots[id].phase;
            match phase {
                Phase::Done => continue,
                Phase::Estimating => {
                    let n = robots[id].dataset.len();
                    let ov = robots[id].observed_variance;
                    events.push(Event { t, robot: Some(id), kind: EventKind::Estimate { samples: n, observed: ov } });
                    events.push(Event { t, robot: Some(id), kind: EventKind::Done { reason: "no target".into() } });
                    robots[id].phase = Phase::Done;
                    continue;
                }
                Phase::Sampling if tick >= robots[id].sampling_until => {
                    let k = robots[id].samples_taken;
                    robots[id].samples_taken += 1;
                    let true_pos = robots[id].position;
                    let mut sample = acquisition.acquire(id, k, true_pos)?;
                    if cfg.comms.position_noise > 0.0 {
                        let mut pr = rng::stream(seed, "position-noise", &[id as u64, k]);
                        let noisy = [true_pos[0] + noise.sample(&mut pr), true_pos[1] + noise.sample(&mut pr)];
                        sample.location = clamp_to_plate(noisy, side).0;
                    }
                    let loc = sample.location;
                    if robots[id].dataset.nearest_distance(loc) < nav.theta_x {
                        events.push(Event { t, robot: Some(id), kind: EventKind::Discard { x: loc[0], y: loc[1], reason: "too close".into() } });
                    } else {
                        events.push(Event { t, robot: Some(id), kind: EventKind::Sample { x: loc[0], y: loc[1], window_id: sample.window_id } });
                        let (mut delivered, mut dropped) = (0, 0);
                        for other in (0..robots.len()).filter(|&o| o != id) {
                            if cfg.comms.drop_probability > 0.0 && comms_rng.random::<f64>() < cfg.comms.drop_probability {
                                dropped += 1;
                                continue;
                            }
                            delivered += 1;
                            robots[other].dataset.try_push(sample.clone(), nav.theta_x);
                            let retarget = robots[other].phase == Phase::Navigating
                                && robots[other].target.is_some_and(|tg| distance(tg, loc) < nav.theta_x);
                            if retarget {
                                events.push(Event { t, robot: Some(other), kind: EventKind::Retarget { reason: "target taken".into() } });
                                replan(&mut robots[other], cfg, &mut events, t)?;
                            }
                        }
                        events.push(Event { t, robot: Some(id), kind: EventKind::Broadcast { delivered, dropped } });
                        robots[id].dataset.entries.push(sample);
                        committed.push(loc);
                        tracker.push(loc)?;
                    }
                    replan(&mut robots[id], cfg, &mut events, t)?;
                }
                Phase::Sampling => {}
                Phase::Navigating => {
                    let neighbors: Vec<Point> = robots.iter().filter(|r| r.id != id).map(|r| r.position).collect();
                    match step_motion(&mut robots[id], &neighbors, nav, side, &mut motion_rng[id]) {
                        Motion::Arrived => {
                            robots[id].phase = Phase::Sampling;
                            robots[id].sampling_until = tick + sample_ticks;
                            robots[id].target = None;
                        }
                        Motion::Avoiding => {
                            let count = robots[id].collision_count_this_leg;
                            events.push(Event { t, robot: Some(id), kind: EventKind::Avoid { count } });
                        }
                        Motion::Replan => {
                            events.push(Event { t, robot: Some(id), kind: EventKind::Retarget { reason: "avoidance limit".into() } });
                            replan(&mut robots[id], cfg, &mut events, t)?;
                        }
                        Motion::Moving => {}
                    }
                }
            }
        }
        for r in robots.iter_mut() {
            if matches!(r.phase, Phase::Navigating | Phase::Sampling) {
                r.battery_ticks = r.battery_ticks.saturating_sub(1);
                if r.battery_ticks == 0 {
                    r.phase = Phase::Done;
                    events.push(Event { t: time_of(tick + 1, nav.dt), robot: Some(r.id), kind: EventKind::Done { reason: "battery".into() } });
                }
            }
        }
        tick += 1;
    }
    // Quiet swarm: the variance stays put until the budget ends.
    let last = probes.last().map_or(0.0, |p| p.1);
    let last_observed = swarm_observed(&robots, &cfg.exploration);
    let mut next = (tick / probe_every + 1) * probe_every;
    while next <= budget {
        probes.push((time_of(next, nav.dt), last));
        observed.push((time_of(next, nav.dt), last_observed));
        next += probe_every;
    }
    Ok(MissionResult { robots, events, probes, observed, committed })
}

fn swarm_observed(robots: &[RobotState], hyper: &GpHyper) -> f64 {
    let prior = hyper.sigma_v * hyper.sigma_v;
    robots.iter().map(|r| r.observed_variance.min(prior)).fold(0.0, f64::max)
}

fn replan(robot: &mut RobotState, cfg: &MissionConfig, events: &mut Vec<Event>, t: f64) -> Result<()> {
    let locs = robot.dataset.locations();
    robot.collision_count_this_leg = 0;
    robot.maneuver = None;
    let sel = select_target(&locs, robot.position, &cfg.nav, &cfg.exploration, cfg.side)?;
    robot.observed_variance = sel.observed;
    match sel.target {
        Some(p) => {
            robot.target = Some(p);
            robot.phase = Phase::Navigating;
            events.push(Event { t, robot: Some(robot.id), kind: EventKind::Target { x: p[0], y: p[1], observed: sel.observed } });
        }
        None => {
            robot.target = None;
            robot.phase = Phase::Estimating;
        }
    }
    Ok(())
}
