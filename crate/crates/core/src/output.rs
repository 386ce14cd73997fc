//! CSV, PGM and JSON writers. Floats are written with 17 significant digits
//! so every value round-trips exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::classical::{Orbit, PhasePoint};
use crate::evolve::{Histogram, ModeTrack};
use crate::floquet::{QuasiEigenstate, Spectrum};
use crate::params::SystemParams;
use crate::phasespace::{fold_to_map, HusimiGrid};
use crate::Result;

/// `x` with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Line-oriented CSV writer with a header row and LF endings.
pub struct CsvWriter {
    out: BufWriter<File>,
    columns: usize,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", header.join(","))?;
        Ok(CsvWriter {
            out,
            columns: header.len(),
        })
    }

    /// Header built from a fixed prefix and numbered column groups.
    pub fn create_owned(path: &Path, header: &[String]) -> Result<Self> {
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        Self::create(path, &refs)
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        debug_assert_eq!(fields.len(), self.columns);
        writeln!(self.out, "{}", fields.join(","))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_spectrum_csv(path: &Path, spectrum: &Spectrum) -> Result<()> {
    let mut w = CsvWriter::create(path, &["index", "quasi_energy", "eigenvalue_re", "eigenvalue_im", "residual"])?;
    for (i, s) in spectrum.states.iter().enumerate() {
        w.row(&[
            i.to_string(),
            fmt_f64(s.quasi_energy),
            fmt_f64(s.eigenvalue.re),
            fmt_f64(s.eigenvalue.im),
            fmt_f64(s.residual),
        ])?;
    }
    w.finish()
}

pub fn write_eigenvector_csv(path: &Path, state: &QuasiEigenstate, params: &SystemParams) -> Result<()> {
    let mut w = CsvWriter::create(path, &["q", "p_q", "amp_re", "amp_im"])?;
    for (q, a) in state.block_vector.iter().enumerate() {
        w.row(&[
            q.to_string(),
            fmt_f64(params.ladder_momentum(q as i64)),
            fmt_f64(a.re),
            fmt_f64(a.im),
        ])?;
    }
    w.finish()
}

/// `z,p,theta,J,value` with `(θ, 𝒥)` the classical-map coordinates.
pub fn write_husimi_csv(path: &Path, grid: &HusimiGrid, params: &SystemParams) -> Result<()> {
    let mut w = CsvWriter::create(path, &["z", "p", "theta", "J", "value"])?;
    for (z, p, v) in grid.points() {
        let (theta, j) = fold_to_map(z, p, params);
        w.row(&[fmt_f64(z), fmt_f64(p), fmt_f64(theta), fmt_f64(j), fmt_f64(v)])?;
    }
    w.finish()
}

/// 16-bit binary PGM; gray 65535 is the grid maximum and the top image row
/// is the largest `p`.
pub fn pgm_bytes(grid: &HusimiGrid) -> Vec<u8> {
    let (nz, np) = (grid.spec.nz, grid.spec.np);
    let max = grid.max();
    let mut out = format!("P5\n{nz} {np}\n65535\n").into_bytes();
    out.reserve(2 * nz * np);
    for ip in (0..np).rev() {
        for iz in 0..nz {
            let v = if max > 0.0 { grid.value(iz, ip) / max } else { 0.0 };
            let g = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
            out.extend_from_slice(&g.to_be_bytes());
        }
    }
    out
}

pub fn write_pgm(path: &Path, grid: &HusimiGrid) -> Result<()> {
    std::fs::write(path, pgm_bytes(grid))?;
    Ok(())
}

pub fn write_poincare_csv(path: &Path, sections: &[Vec<PhasePoint>]) -> Result<()> {
    let mut w = CsvWriter::create(path, &["traj_id", "step", "theta", "J"])?;
    for (id, pts) in sections.iter().enumerate() {
        for (step, p) in pts.iter().enumerate() {
            w.row(&[id.to_string(), step.to_string(), fmt_f64(p.theta), fmt_f64(p.action)])?;
        }
    }
    w.finish()
}

/// Orbit catalog; all orbits must share one order.
pub fn write_orbit_csv(path: &Path, orbits: &[Orbit]) -> Result<()> {
    let order = orbits.first().map_or(0, |o| o.order);
    let mut header = vec!["o".to_string(), "j".to_string()];
    header.extend((0..order).map(|i| format!("theta_{i}")));
    header.extend((0..order).map(|i| format!("J_{i}")));
    header.extend(["trace".to_string(), "stable".to_string()]);
    let mut w = CsvWriter::create_owned(path, &header)?;
    for o in orbits {
        let mut row = vec![o.order.to_string(), o.jump.to_string()];
        row.extend(o.points.iter().map(|p| fmt_f64(p.theta)));
        row.extend(o.points.iter().map(|p| fmt_f64(p.action)));
        row.push(fmt_f64(o.monodromy_trace));
        row.push(o.stable.to_string());
        w.row(&row)?;
    }
    w.finish()
}

/// `kick,p_bin_lo,p_bin_hi,mass` for every bin with nonzero mass.
pub fn write_series_csv(path: &Path, rows: &[Histogram]) -> Result<()> {
    let mut w = CsvWriter::create(path, &["kick", "p_bin_lo", "p_bin_hi", "mass"])?;
    for h in rows {
        for (i, &m) in h.mass.iter().enumerate() {
            if m > 0.0 {
                let c = h.center(i);
                w.row(&[h.kick.to_string(), fmt_f64(c - 0.5), fmt_f64(c + 0.5), fmt_f64(m)])?;
            }
        }
    }
    w.finish()
}

pub fn write_summary_csv(path: &Path, track: &ModeTrack) -> Result<()> {
    let mut w = CsvWriter::create(path, &["kick", "peak_p", "mode_fraction"])?;
    for ((k, p), f) in track.kicks.iter().zip(&track.positions).zip(&track.fractions) {
        w.row(&[k.to_string(), fmt_f64(*p), fmt_f64(*f)])?;
    }
    w.finish()
}

/// Metadata written next to every output file.
#[derive(Debug, Serialize)]
pub struct Sidecar<'a, C: Serialize, D: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub output: &'a str,
    pub config: &'a C,
    pub params: Option<&'a SystemParams>,
    pub details: D,
}

impl<'a, C: Serialize, D: Serialize> Sidecar<'a, C, D> {
    pub fn new(command: &'a str, output: &'a str, config: &'a C, params: Option<&'a SystemParams>, details: D) -> Self {
        Sidecar {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            output,
            config,
            params,
            details,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasespace::GridSpec;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.0f64.sqrt(), 1e-300, 6.02214076e23, f64::MIN_POSITIVE] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }

    #[test]
    fn pgm_layout() {
        let spec = GridSpec { z_min: 0.0, z_max: 1.0, nz: 3, p_min: 0.0, p_max: 1.0, np: 2 };
        let grid = HusimiGrid {
            spec,
            values: vec![0.0, 0.5, 1.0, 2.0, 0.0, 0.0],
            truncation_bound: 0.0,
        };
        let bytes = pgm_bytes(&grid);
        let header = b"P5\n3 2\n65535\n";
        assert_eq!(&bytes[..header.len()], header);
        let px: Vec<u16> = bytes[header.len()..]
            .chunks(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect();
        // top row is the larger p
        assert_eq!(px, vec![65535, 0, 0, 0, 16384, 32768]);
    }

    #[test]
    fn csv_has_header_and_lf() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut w = CsvWriter::create(&path, &["a", "b"]).unwrap();
        w.row(&["1".into(), fmt_f64(0.5)]).unwrap();
        w.finish().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "a,b\n1,5.0000000000000000e-1\n");
    }
}
