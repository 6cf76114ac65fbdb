//! Modal bases: retained mode shapes with their frequencies and energy weights.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::grid::{mac, Grid, GridField, Point};
use crate::plate::{ClampedEdges, ModeSet};

/// Energy shares of the two dominant modes (66% and 29% of the response).
pub const DEFAULT_ENERGY_SHARES: [f64; 2] = [0.66, 0.29];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    /// Hz.
    pub frequency: f64,
    pub weight: f64,
    /// Unit norm over the grid nodes.
    pub shape: GridField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalBasis {
    pub grid: Grid,
    pub clamped: ClampedEdges,
    pub modes: Vec<Mode>,
}

/// JSON header written next to the per-mode CSV grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisHeader {
    pub grid_n: usize,
    pub side_length: f64,
    pub spacing: f64,
    pub clamped: ClampedEdges,
    pub frequencies: Vec<f64>,
    pub weights: Vec<f64>,
    pub files: Vec<String>,
    pub hash: String,
}

/// Makes the center value positive; falls back to the first extremum when the
/// center sits on a zero line.
pub fn align_sign(mut f: GridField) -> GridField {
    let max = f.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let center = f.values[f.grid.center_index()];
    let reference = if center.abs() > 1e-6 * max {
        center
    } else {
        f.values.iter().copied().find(|v| v.abs() == max).unwrap_or(0.0)
    };
    if reference < 0.0 {
        f.values.iter_mut().for_each(|v| *v = -*v);
    }
    f
}

impl ModalBasis {
    /// Builds a basis, renormalizing weights to sum to one.
    pub fn new(grid: Grid, clamped: ClampedEdges, mut modes: Vec<Mode>) -> Result<Self> {
        if modes.is_empty() {
            return invalid("modal basis needs at least one mode");
        }
        let total: f64 = modes.iter().map(|m| m.weight).sum();
        if !(total > 0.0) || modes.iter().any(|m| m.weight < 0.0) {
            return invalid("mode weights must be non-negative with a positive sum");
        }
        for m in &mut modes {
            m.weight /= total;
            if m.shape.grid != grid {
                return invalid("mode shape grid mismatch");
            }
            let norm = m.shape.norm();
            if (norm - 1.0).abs() > 1e-9 {
                return invalid(format!("mode shape norm {norm} is not 1"));
            }
        }
        if modes.windows(2).any(|w| !(w[1].frequency > w[0].frequency)) {
            return invalid("mode frequencies must be strictly increasing");
        }
        Ok(Self { grid, clamped, modes })
    }

    /// Picks, for each reference mode, the computed mode of highest MAC.
    pub fn select_dominant(set: &ModeSet, reference: &ModalBasis, shares: &[f64]) -> Result<Self> {
        if shares.len() != reference.modes.len() {
            return invalid("one energy share per reference mode is required");
        }
        let mut taken: Vec<usize> = Vec::new();
        for r in &reference.modes {
            let best = (0..set.shapes.len())
                .filter(|i| !taken.contains(i))
                .max_by(|&a, &b| {
                    mac(&set.shapes[a].values, &r.shape.values)
                        .total_cmp(&mac(&set.shapes[b].values, &r.shape.values))
                })
                .ok_or_else(|| Error::InvalidInput("not enough computed modes".into()))?;
            taken.push(best);
        }
        let mut modes: Vec<Mode> = taken
            .iter()
            .zip(shares)
            .map(|(&i, &w)| Mode { frequency: set.frequencies[i], weight: w, shape: set.shapes[i].clone() })
            .collect();
        modes.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
        Self::new(set.grid, reference.clamped, modes)
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.frequency).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.weight).collect()
    }

    /// Mode shape values at an arbitrary point (bilinear).
    pub fn values_at(&self, p: Point) -> Result<Vec<f64>> {
        self.modes.iter().map(|m| m.shape.interpolate(p)).collect()
    }

    /// Content hash over grid, frequencies, weights and shapes.
    pub fn hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.grid.n as u64).to_le_bytes());
        h.update(self.grid.side.to_le_bytes());
        h.update([self.clamped as u8]);
        for m in &self.modes {
            h.update(m.frequency.to_le_bytes());
            h.update(m.weight.to_le_bytes());
            for v in &m.shape.values {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().into()
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash())
    }

    pub fn header(&self) -> BasisHeader {
        BasisHeader {
            grid_n: self.grid.n,
            side_length: self.grid.side,
            spacing: self.grid.spacing(),
            clamped: self.clamped,
            frequencies: self.frequencies(),
            weights: self.weights(),
            files: (1..=self.modes.len()).map(|k| format!("mode_{k}.csv")).collect(),
            hash: self.hash_hex(),
        }
    }

    /// Writes `basis.json` plus one CSV grid per mode into `dir`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let header = self.header();
        for (m, file) in self.modes.iter().zip(&header.files) {
            fs::write(dir.join(file), m.shape.to_csv())?;
        }
        fs::write(dir.join("basis.json"), serde_json::to_string_pretty(&header)?)?;
        Ok(())
    }

    /// Reads a basis written by [`export`](Self::export).
    pub fn import(dir: &Path) -> Result<Self> {
        let header: BasisHeader = serde_json::from_str(&fs::read_to_string(dir.join("basis.json"))?)?;
        let grid = Grid::new(header.grid_n, header.side_length)?;
        let mut modes = Vec::new();
        for ((file, f), w) in header.files.iter().zip(&header.frequencies).zip(&header.weights) {
            let text = fs::read_to_string(dir.join(file))?;
            let values: std::result::Result<Vec<f64>, _> =
                text.lines().flat_map(|l| l.split(',')).map(|v| v.trim().parse::<f64>()).collect();
            let values = values.map_err(|e| Error::InvalidInput(format!("{file}: {e}")))?;
            let shape = GridField::new(grid, values)?;
            let norm = shape.norm();
            modes.push(Mode { frequency: *f, weight: *w, shape: GridField { grid, values: shape.values.iter().map(|v| v / norm).collect() } });
        }
        Self::new(grid, header.clamped, modes)
    }

    /// Compact binary form used by the on-disk caches.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"MBAS");
        out.extend_from_slice(&(self.grid.n as u32).to_le_bytes());
        out.extend_from_slice(&self.grid.side.to_le_bytes());
        out.push(self.clamped as u8);
        out.extend_from_slice(&(self.modes.len() as u32).to_le_bytes());
        for m in &self.modes {
            out.extend_from_slice(&m.frequency.to_le_bytes());
            out.extend_from_slice(&m.weight.to_le_bytes());
            for v in &m.shape.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = || Error::InvalidInput("corrupt modal basis cache".into());
        let mut r = ByteReader { buf: bytes, pos: 0 };
        if r.take(4).ok_or_else(bad)? != b"MBAS" {
            return Err(bad());
        }
        let n = r.u32().ok_or_else(bad)? as usize;
        let side = r.f64().ok_or_else(bad)?;
        let clamped = match r.take(1).ok_or_else(bad)?[0] {
            0 => ClampedEdges::XEdges,
            1 => ClampedEdges::YEdges,
            _ => return Err(bad()),
        };
        let grid = Grid::new(n, side)?;
        let count = r.u32().ok_or_else(bad)? as usize;
        let mut modes = Vec::with_capacity(count);
        for _ in 0..count {
            let frequency = r.f64().ok_or_else(bad)?;
            let weight = r.f64().ok_or_else(bad)?;
            let values = (0..grid.len()).map(|_| r.f64()).collect::<Option<Vec<_>>>().ok_or_else(bad)?;
            modes.push(Mode { frequency, weight, shape: GridField::new(grid, values)? });
        }
        if r.pos != bytes.len() {
            return Err(bad());
        }
        Ok(Self { grid, clamped, modes })
    }
}

pub(crate) struct ByteReader<'a> {
    pub buf: &'a [u8],
    pub pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    pub fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    pub fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    pub fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plate::{analytic_beam_basis, PlateSpec};

    fn basis() -> ModalBasis {
        analytic_beam_basis(&PlateSpec { grid_n: 21, ..PlateSpec::default() }).unwrap()
    }

    #[test]
    fn weights_are_renormalized_shares() {
        let w = basis().weights();
        assert!((w[0] - 0.66 / 0.95).abs() < 1e-12);
        assert!((w[1] - 0.29 / 0.95).abs() < 1e-12);
        assert!((w[0] - 0.695).abs() < 5e-4 && (w[1] - 0.305).abs() < 5e-4);
    }

    #[test]
    fn binary_and_csv_round_trips() {
        let b = basis();
        assert_eq!(ModalBasis::from_bytes(&b.to_bytes()).unwrap(), b);
        let dir = tempfile::tempdir().unwrap();
        b.export(dir.path()).unwrap();
        let back = ModalBasis::import(dir.path()).unwrap();
        assert_eq!(back.frequencies(), b.frequencies());
        for (x, y) in back.modes.iter().zip(&b.modes) {
            for (u, v) in x.shape.values.iter().zip(&y.shape.values) {
                assert!((u - v).abs() < 1e-11);
            }
        }
        assert!(ModalBasis::from_bytes(&b.to_bytes()[..40]).is_err());
    }

    #[test]
    fn out_of_order_frequencies_are_rejected() {
        let mut b = basis();
        b.modes.swap(0, 1);
        assert!(ModalBasis::new(b.grid, b.clamped, b.modes).is_err());
    }

    #[test]
    fn sign_alignment_makes_center_positive() {
        let b = basis();
        for m in &b.modes {
            assert!(m.shape.values[b.grid.center_index()] > 0.0);
            let flipped = GridField { grid: b.grid, values: m.shape.values.iter().map(|v| -v).collect() };
            assert_eq!(align_sign(flipped), m.shape);
        }
    }
}
