//! Spectral processing and frequency domain decomposition.
//!
//! A robot windows its acceleration record with a Hann window, keeps only
//! the FFT bins around each retained natural frequency, and shares those
//! slices. Mode values at the sampling locations come from the dominant
//! eigenvector of the band-averaged cross-spectral density.

use nalgebra::{Complex, DMatrix, SymmetricEigen};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{distance, Point};
use crate::modal::ByteReader;

pub type C64 = Complex<f64>;

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
        .collect()
}

/// One-sided spectrum, bins `0 ..= N/2` at spacing `1/T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bins: Vec<C64>,
    /// Hz per bin.
    pub resolution: f64,
    /// Length of the transformed record.
    pub len: usize,
}

impl Spectrum {
    /// Energy of the windowed record recovered from the one-sided bins.
    pub fn parseval_energy(&self) -> f64 {
        let n = self.len;
        let mut e = 0.0;
        for (k, b) in self.bins.iter().enumerate() {
            let doubled = k != 0 && !(n.is_multiple_of(2) && k == n / 2);
            e += b.norm_sqr() * if doubled { 2.0 } else { 1.0 };
        }
        e / n as f64
    }
}

pub fn window_fft(a: &[f64], rate: f64) -> Result<Spectrum> {
    if a.len() < 2 {
        return invalid("need at least two samples for a spectrum");
    }
    if a.iter().any(|v| !v.is_finite()) || !(rate > 0.0) {
        return invalid("non-finite samples or rate");
    }
    let n = a.len();
    let w = hann(n);
    let mut buf: Vec<C64> = a.iter().zip(&w).map(|(x, w)| C64::new(x * w, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf.truncate(n / 2 + 1);
    Ok(Spectrum { bins: buf, resolution: rate / n as f64, len: n })
}

/// Contiguous slice of spectrum bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub start_bin: u32,
    pub values: Vec<C64>,
}

/// Number of bins a band of width `delta_f` spans at resolution `resolution`.
pub fn band_bins(delta_f: f64, resolution: f64) -> usize {
    (delta_f / resolution).round() as usize
}

/// The bins within `Δf/2` of each frequency, in the given order.
pub fn extract_bands(spec: &Spectrum, freqs: &[f64], delta_f: f64) -> Result<Vec<Band>> {
    let b = band_bins(delta_f, spec.resolution);
    if b <= 2 {
        return invalid(format!("band of {delta_f} Hz spans only {b} bins"));
    }
    for (i, fi) in freqs.iter().enumerate() {
        for fj in &freqs[..i] {
            if (fi - fj).abs() <= delta_f {
                return invalid(format!("bands around {fj} Hz and {fi} Hz overlap at Δf = {delta_f} Hz"));
            }
        }
    }
    freqs
        .iter()
        .map(|&f| {
            let center = (f / spec.resolution).round() as isize;
            let start = center - (b / 2) as isize;
            if start < 0 || start as usize + b > spec.bins.len() {
                return invalid(format!("band around {f} Hz leaves the spectrum"));
            }
            let start = start as usize;
            Ok(Band { start_bin: start as u32, values: spec.bins[start..start + b].to_vec() })
        })
        .collect()
}

/// Fraction of the one-sided spectrum carried by `modes` bands.
pub fn reduction_ratio(modes: usize, bins_per_band: usize, record_len: usize) -> f64 {
    (modes * bins_per_band) as f64 / (record_len / 2) as f64
}

/// One robot measurement: where it was taken and the retained bands.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSample {
    pub location: Point,
    pub window_id: u32,
    pub bands: Vec<Band>,
}

/// Serialized size of a sample with the given band lengths.
pub fn wire_size(band_lens: &[usize]) -> usize {
    8 + 8 + 4 + 4 + band_lens.iter().map(|b| 4 + 4 + 16 * b).sum::<usize>()
}

impl SpectrumSample {
    /// Little-endian: x f64, y f64, window id u32, band count u32, then for
    /// each band its start bin u32, length u32 and `length` (re, im) f64 pairs.
    pub fn to_bytes(&self) -> Vec<u8> {
        let lens: Vec<usize> = self.bands.iter().map(|b| b.values.len()).collect();
        let mut out = Vec::with_capacity(wire_size(&lens));
        out.extend_from_slice(&self.location[0].to_le_bytes());
        out.extend_from_slice(&self.location[1].to_le_bytes());
        out.extend_from_slice(&self.window_id.to_le_bytes());
        out.extend_from_slice(&(self.bands.len() as u32).to_le_bytes());
        for b in &self.bands {
            out.extend_from_slice(&b.start_bin.to_le_bytes());
            out.extend_from_slice(&(b.values.len() as u32).to_le_bytes());
            for v in &b.values {
                out.extend_from_slice(&v.re.to_le_bytes());
                out.extend_from_slice(&v.im.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = || Error::InvalidInput("truncated or malformed sample payload".into());
        let mut r = ByteReader { buf: bytes, pos: 0 };
        let location = [r.f64().ok_or_else(bad)?, r.f64().ok_or_else(bad)?];
        let window_id = r.u32().ok_or_else(bad)?;
        let count = r.u32().ok_or_else(bad)?;
        let mut bands = Vec::new();
        for _ in 0..count {
            let start_bin = r.u32().ok_or_else(bad)?;
            let len = r.u32().ok_or_else(bad)? as usize;
            if len > bytes.len() / 16 {
                return Err(bad());
            }
            let mut values = Vec::with_capacity(len);
            for _ in 0..len {
                values.push(C64::new(r.f64().ok_or_else(bad)?, r.f64().ok_or_else(bad)?));
            }
            bands.push(Band { start_bin, values });
        }
        if r.pos != bytes.len() {
            return Err(bad());
        }
        Ok(Self { location, window_id, bands })
    }
}

/// The shared dataset: samples at least `min_distance` apart.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleSet {
    pub entries: Vec<SpectrumSample>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn locations(&self) -> Vec<Point> {
        self.entries.iter().map(|s| s.location).collect()
    }

    /// Distance from `p` to the nearest stored sample.
    pub fn nearest_distance(&self, p: Point) -> f64 {
        self.entries.iter().map(|s| distance(s.location, p)).fold(f64::INFINITY, f64::min)
    }

    /// Appends unless a stored sample lies within `min_distance`.
    pub fn try_push(&mut self, sample: SpectrumSample, min_distance: f64) -> bool {
        if self.nearest_distance(sample.location) < min_distance {
            return false;
        }
        self.entries.push(sample);
        true
    }
}

/// How band bins are combined into one cross-spectral matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsdAveraging {
    /// Mean of the per-bin outer products over the band.
    #[default]
    BandMean,
    /// Only the bin whose outer product has the largest leading eigenvalue.
    PeakBin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsdMatrix {
    pub mode: usize,
    pub matrix: DMatrix<C64>,
}

fn outer_at(samples: &[SpectrumSample], mode: usize, bin: usize) -> DMatrix<C64> {
    let v = nalgebra::DVector::from_iterator(samples.len(), samples.iter().map(|s| s.bands[mode].values[bin]));
    &v * v.adjoint()
}

pub fn build_csd(samples: &[SpectrumSample], mode: usize, averaging: CsdAveraging) -> Result<CsdMatrix> {
    if samples.len() < 2 {
        return invalid("cross-spectral density needs at least two samples");
    }
    let bins = match samples[0].bands.get(mode) {
        Some(b) => (b.start_bin, b.values.len()),
        None => return invalid(format!("sample 0 has no band {mode}")),
    };
    for (k, s) in samples.iter().enumerate() {
        match s.bands.get(mode) {
            Some(b) if (b.start_bin, b.values.len()) == bins => {}
            Some(_) => return invalid(format!("sample {k} band {mode} covers different bins")),
            None => return invalid(format!("sample {k} has no band {mode}")),
        }
    }
    let n = samples.len();
    let matrix = match averaging {
        CsdAveraging::BandMean => {
            let mut g = DMatrix::<C64>::zeros(n, n);
            for bin in 0..bins.1 {
                for c in 0..n {
                    let vc = samples[c].bands[mode].values[bin].conj();
                    for r in 0..n {
                        g[(r, c)] += samples[r].bands[mode].values[bin] * vc;
                    }
                }
            }
            g / C64::new(bins.1 as f64, 0.0)
        }
        CsdAveraging::PeakBin => {
            // Rank one per bin: the leading eigenvalue is the vector's energy.
            let peak = (0..bins.1)
                .max_by(|&a, &b| {
                    let e = |bin: usize| samples.iter().map(|s| s.bands[mode].values[bin].norm_sqr()).sum::<f64>();
                    e(a).total_cmp(&e(b))
                })
                .unwrap_or(0);
            outer_at(samples, mode, peak)
        }
    };
    Ok(CsdMatrix { mode, matrix })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FddMode {
    /// Real unit vector over the sampling locations.
    pub values: Vec<f64>,
    pub singular_values: [f64; 2],
    /// Leading pair closer than `1e-6 λ₁`.
    pub degenerate: bool,
    /// Norm of the discarded imaginary part after phase rotation, relative
    /// to the complex vector's norm.
    pub imaginary_ratio: f64,
}

impl FddMode {
    pub fn has_warning(&self) -> bool {
        self.degenerate || self.imaginary_ratio > 0.1
    }
}

/// Dominant singular vector of `G` as a real mode shape. With a prior (mode
/// values at the same locations) the sign maximizes agreement with it;
/// otherwise the largest-magnitude entry is made positive.
pub fn fdd_mode(g: &CsdMatrix, prior: Option<&[f64]>) -> Result<FddMode> {
    let m = &g.matrix;
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return invalid("cross-spectral matrix must be square and non-empty");
    }
    if let Some(p) = prior {
        if p.len() != n {
            return invalid(format!("prior has {} values for {n} locations", p.len()));
        }
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return invalid("non-finite cross-spectral entries");
    }
    // Hermitian part guards against round-off asymmetry.
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let l1 = eig.eigenvalues[order[0]];
    let l2 = if n > 1 { eig.eigenvalues[order[1]] } else { 0.0 };
    let degenerate = n > 1 && (l1 - l2) < 1e-6 * l1.abs();
    let lead = if degenerate {
        // Smallest column index among the tied pair.
        order.iter().take(2).copied().min().unwrap_or(order[0])
    } else {
        order[0]
    };
    let u: Vec<C64> = eig.eigenvectors.column(lead).iter().copied().collect();

    let s: C64 = u.iter().map(|z| z * z).sum();
    let rot = C64::from_polar(1.0, -0.5 * s.arg());
    let rotated: Vec<C64> = u.iter().map(|z| z * rot).collect();
    let total = rotated.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let imag = rotated.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
    let mut values: Vec<f64> = rotated.iter().map(|z| z.re).collect();
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    let flip = match prior {
        Some(p) => values.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() < 0.0,
        None => values.iter().copied().fold(0.0f64, |best, v| if v.abs() > best.abs() { v } else { best }) < 0.0,
    };
    if flip {
        values.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(FddMode {
        values,
        singular_values: [l1.max(0.0), l2.max(0.0)],
        degenerate,
        imaginary_ratio: if total > 0.0 { imag / total } else { 0.0 },
    })
}
