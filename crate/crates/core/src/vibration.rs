//! Ambient vibration synthesis by mode superposition.
//!
//! Each retained mode is a damped single-degree-of-freedom oscillator driven
//! by Gaussian white noise held constant over each output sample, stepped
//! with the exact discrete-time transition of the continuous system. Modal
//! accelerations are then scaled so that their mean squares split in the
//! basis' energy weights and the plate-averaged surface acceleration has
//! the requested RMS. Robots read the surface acceleration at a point as
//! `Σ φᵢ(x) q̈ᵢ(t)` plus accelerometer noise.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::grid::Point;
use crate::modal::{ByteReader, ModalBasis};
use crate::rng;

/// Standard gravity, m/s².
pub const STANDARD_GRAVITY: f64 = 9.806_65;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldParams {
    /// Modal damping ratios; a single value applies to every mode.
    pub damping: Vec<f64>,
    /// Seconds of output.
    pub duration: f64,
    /// Hz.
    pub sample_rate: f64,
    /// Plate-averaged RMS surface acceleration, m/s². Zero gives a silent
    /// field.
    pub rms_acceleration: f64,
    /// Seconds simulated and discarded so the output starts in steady state.
    pub burn_in: f64,
}

impl Default for FieldParams {
    fn default() -> Self {
        Self { damping: vec![0.01], duration: 30.0, sample_rate: 400.0, rms_acceleration: 0.05, burn_in: 10.0 }
    }
}

impl FieldParams {
    pub fn samples(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }

    /// Damping ratio of each of `modes` modes.
    pub fn damping_ratios(&self, modes: usize) -> Result<Vec<f64>> {
        let z = match self.damping.len() {
            1 => vec![self.damping[0]; modes],
            k if k == modes => self.damping.clone(),
            k => return invalid(format!("{k} damping ratios given for {modes} modes")),
        };
        if let Some(bad) = z.iter().find(|z| !(**z > 0.0 && **z < 0.2)) {
            return invalid(format!("damping ratio {bad} outside (0, 0.2)"));
        }
        Ok(z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorModel {
    /// Accelerometer noise density, g/√Hz.
    pub noise_density: f64,
    /// Hz.
    pub sample_rate: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self { noise_density: 60e-6, sample_rate: 400.0 }
    }
}

impl SensorModel {
    /// Per-sample noise standard deviation in m/s² (white noise band-limited
    /// to Nyquist).
    pub fn noise_std(&self) -> f64 {
        self.noise_density * STANDARD_GRAVITY * (self.sample_rate / 2.0).sqrt()
    }
}

/// A time window into the field, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VibrationField {
    pub basis: ModalBasis,
    /// One series per mode, m/s².
    pub modal_accelerations: Vec<Vec<f64>>,
    pub sample_rate: f64,
    pub duration: f64,
}

/// Exact zero-order-hold discretization of `q̈ + 2ζω q̇ + ω² q = u`.
struct Oscillator {
    phi: [[f64; 2]; 2],
    gamma: [f64; 2],
    two_zeta_omega: f64,
    omega2: f64,
}

impl Oscillator {
    fn new(freq: f64, zeta: f64, dt: f64) -> Self {
        let w = 2.0 * PI * freq;
        let wd = w * (1.0 - zeta * zeta).sqrt();
        let decay = (-zeta * w * dt).exp();
        let (s, c) = (wd * dt).sin_cos();
        let phi = [
            [decay * (c + zeta * w / wd * s), decay * s / wd],
            [-decay * w * w * s / wd, decay * (c - zeta * w / wd * s)],
        ];
        let gamma = [(1.0 - phi[1][1] - 2.0 * zeta * w * phi[0][1]) / (w * w), phi[0][1]];
        Self { phi, gamma, two_zeta_omega: 2.0 * zeta * w, omega2: w * w }
    }

    /// Acceleration response to the input sequence, starting at rest.
    fn run(&self, input: &[f64]) -> Vec<f64> {
        let (mut q, mut v) = (0.0, 0.0);
        input
            .iter()
            .map(|&u| {
                let acc = u - self.two_zeta_omega * v - self.omega2 * q;
                let nq = self.phi[0][0] * q + self.phi[0][1] * v + self.gamma[0] * u;
                let nv = self.phi[1][0] * q + self.phi[1][1] * v + self.gamma[1] * u;
                q = nq;
                v = nv;
                acc
            })
            .collect()
    }
}

pub fn simulate_field(basis: &ModalBasis, params: &FieldParams, seed: u64) -> Result<VibrationField> {
    let zeta = params.damping_ratios(basis.len())?;
    let fmax = basis.frequencies().into_iter().fold(0.0, f64::max);
    if params.sample_rate < 2.2 * fmax {
        return invalid(format!(
            "sample rate {} Hz is below 2.2 × the highest modal frequency {fmax:.2} Hz",
            params.sample_rate
        ));
    }
    if !(params.duration > 0.0) || !(params.rms_acceleration >= 0.0) || !(params.burn_in >= 0.0) {
        return invalid("duration must be positive; RMS acceleration and burn-in non-negative");
    }
    let dt = 1.0 / params.sample_rate;
    let len = params.samples();
    let skip = (params.burn_in * params.sample_rate).round() as usize;
    // Unit-norm shapes over the grid: the grid-mean of Σ φᵢ² is 1/nodes.
    let nodes = basis.grid.len() as f64;
    let mut modal = Vec::with_capacity(basis.len());
    for (k, mode) in basis.modes.iter().enumerate() {
        let mut r = rng::stream(seed, "modal-excitation", &[k as u64]);
        let input: Vec<f64> = (0..skip + len).map(|_| StandardNormal.sample(&mut r)).collect();
        let response = Oscillator::new(mode.frequency, zeta[k], dt).run(&input);
        let series = &response[skip..];
        let ms = series.iter().map(|a| a * a).sum::<f64>() / len as f64;
        let target = params.rms_acceleration * (mode.weight * nodes).sqrt();
        let gain = if ms > 0.0 { target / ms.sqrt() } else { 0.0 };
        modal.push(series.iter().map(|a| a * gain).collect());
    }
    Ok(VibrationField {
        basis: basis.clone(),
        modal_accelerations: modal,
        sample_rate: params.sample_rate,
        duration: len as f64 / params.sample_rate,
    })
}

impl VibrationField {
    pub fn len(&self) -> usize {
        self.modal_accelerations.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mean-square acceleration of each mode.
    pub fn modal_mean_squares(&self) -> Vec<f64> {
        self.modal_accelerations
            .iter()
            .map(|s| s.iter().map(|a| a * a).sum::<f64>() / s.len() as f64)
            .collect()
    }

    /// The same realization restricted to a subset of modes.
    pub fn restricted(&self, modes: &[usize]) -> Self {
        let mut out = self.clone();
        for (k, series) in out.modal_accelerations.iter_mut().enumerate() {
            if !modes.contains(&k) {
                series.iter_mut().for_each(|a| *a = 0.0);
            }
        }
        out
    }

    fn window_range(&self, window: Window) -> Result<std::ops::Range<usize>> {
        let start = (window.start * self.sample_rate).round();
        let count = (window.length * self.sample_rate).round();
        if !(start >= 0.0 && count >= 1.0) || start as usize + count as usize > self.len() {
            return invalid(format!(
                "window [{}, {}] s outside the {} s field",
                window.start,
                window.start + window.length,
                self.duration
            ));
        }
        Ok(start as usize..start as usize + count as usize)
    }

    /// Noise-free surface acceleration at `x` over `window`.
    pub fn clean_signal(&self, x: Point, window: Window) -> Result<Vec<f64>> {
        let range = self.window_range(window)?;
        let phi = self.basis.values_at(x)?;
        let mut out = vec![0.0; range.len()];
        for (series, p) in self.modal_accelerations.iter().zip(&phi) {
            for (o, a) in out.iter_mut().zip(&series[range.clone()]) {
                *o += p * a;
            }
        }
        Ok(out)
    }

    /// Raw window as CSV (`time_s,acceleration_m_s2`).
    pub fn window_csv(signal: &[f64], window: Window, rate: f64) -> String {
        let mut s = String::from("time_s,acceleration_m_s2\n");
        for (k, a) in signal.iter().enumerate() {
            s.push_str(&format!("{:.6},{:.12e}\n", window.start + k as f64 / rate, a));
        }
        s
    }
}

/// Accelerometer reading at `x`: modal superposition plus white sensor noise.
pub fn sample_at(
    field: &VibrationField,
    x: Point,
    window: Window,
    sensor: &SensorModel,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(sensor.noise_density >= 0.0) {
        return invalid("noise density must be non-negative");
    }
    if (sensor.sample_rate - field.sample_rate).abs() > 1e-9 {
        return invalid("sensor and field sample rates differ");
    }
    let mut a = field.clean_signal(x, window)?;
    let std = sensor.noise_std();
    if std > 0.0 {
        let mut r = rng::stream(seed, "sensor-noise", &[]);
        let noise = Normal::new(0.0, std).map_err(|e| Error::InvalidInput(e.to_string()))?;
        a.iter_mut().for_each(|v| *v += noise.sample(&mut r));
    }
    Ok(a)
}

/// On-disk cache of field realizations keyed by seed, basis hash and
/// synthesis parameters.
#[derive(Debug, Clone)]
pub struct FieldCache {
    dir: PathBuf,
}

impl FieldCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn key(basis: &ModalBasis, params: &FieldParams, seed: u64) -> String {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update(basis.hash());
        h.update(serde_json::to_vec(params).unwrap_or_default());
        hex::encode(&h.finalize()[..12])
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("field_{key}.bin"))
    }

    /// Loads the cached realization or synthesizes and stores it.
    pub fn get_or_simulate(&self, basis: &ModalBasis, params: &FieldParams, seed: u64) -> Result<VibrationField> {
        let key = Self::key(basis, params, seed);
        let path = self.path(&key);
        if let Ok(bytes) = fs::read(&path) {
            if let Ok(field) = decode_field(&bytes, basis, seed) {
                return Ok(field);
            }
        }
        let field = simulate_field(basis, params, seed)?;
        fs::create_dir_all(&self.dir)?;
        write_atomic(&path, &encode_field(&field, seed))?;
        Ok(field)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}

/// Layout (little-endian): `"VFLD"`, u64 seed, 32-byte basis hash, f64 rate,
/// u32 mode count, u32 series length, then each series as f64.
pub fn encode_field(field: &VibrationField, seed: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * field.len() * field.modal_accelerations.len());
    out.extend_from_slice(b"VFLD");
    out.extend_from_slice(&seed.to_le_bytes());
    out.extend_from_slice(&field.basis.hash());
    out.extend_from_slice(&field.sample_rate.to_le_bytes());
    out.extend_from_slice(&(field.modal_accelerations.len() as u32).to_le_bytes());
    out.extend_from_slice(&(field.len() as u32).to_le_bytes());
    for s in &field.modal_accelerations {
        for v in s {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_field(bytes: &[u8], basis: &ModalBasis, seed: u64) -> Result<VibrationField> {
    let bad = |why: &str| Error::InvalidInput(format!("field cache: {why}"));
    let mut r = ByteReader { buf: bytes, pos: 0 };
    if r.take(4) != Some(b"VFLD".as_slice()) {
        return Err(bad("magic"));
    }
    if r.u64() != Some(seed) {
        return Err(bad("seed mismatch"));
    }
    if r.take(32) != Some(basis.hash().as_slice()) {
        return Err(bad("basis mismatch"));
    }
    let rate = r.f64().ok_or_else(|| bad("truncated"))?;
    let modes = r.u32().ok_or_else(|| bad("truncated"))? as usize;
    let len = r.u32().ok_or_else(|| bad("truncated"))? as usize;
    if modes != basis.len() {
        return Err(bad("mode count"));
    }
    let mut modal = Vec::with_capacity(modes);
    for _ in 0..modes {
        modal.push((0..len).map(|_| r.f64()).collect::<Option<Vec<_>>>().ok_or_else(|| bad("truncated"))?);
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(VibrationField { basis: basis.clone(), modal_accelerations: modal, sample_rate: rate, duration: len as f64 / rate })
}
