//! Binary basis-file format for externally constructed bases.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "QMCB1" (5 bytes)
//! u32 mode count s
//! u32 grid resolution per axis
//! f64 x0, f64 x1, f64 y0, f64 y1      -- domain bounds
//! per mode: f64 sup_norm, then grid_n * grid_n f64 values, row-major
//!           (rows sweep x, columns sweep y)
//! ```
//!
//! Wavelet-type bases built elsewhere are consumed through this format; the
//! crate can also round-trip its own spectral bases for testing and as a
//! construction reference.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

use super::FieldBasis;

const MAGIC: &[u8; 5] = b"QMCB1";

/// A basis tabulated on a uniform grid, evaluated by bilinear interpolation.
#[derive(Debug, Clone)]
pub struct TabulatedBasis {
    grid_n: u32,
    domain: [f64; 4],
    sup_norms: Vec<f64>,
    /// Mode-major values, each mode row-major over the grid.
    values: Vec<f64>,
}

impl TabulatedBasis {
    pub fn grid_resolution(&self) -> u32 {
        self.grid_n
    }

    fn mode_values(&self, j: usize) -> &[f64] {
        let len = (self.grid_n as usize) * (self.grid_n as usize);
        &self.values[j * len..(j + 1) * len]
    }
}

impl FieldBasis for TabulatedBasis {
    fn mode_count(&self) -> usize {
        self.sup_norms.len()
    }

    fn eval_mode(&self, j: usize, x: [f64; 2]) -> f64 {
        let [x0, x1, y0, y1] = self.domain;
        let n = self.grid_n as usize;
        let fx = ((x[0] - x0) / (x1 - x0) * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
        let fy = ((x[1] - y0) / (y1 - y0) * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
        let ix = (fx as usize).min(n - 2);
        let iy = (fy as usize).min(n - 2);
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let v = self.mode_values(j);
        let at = |i: usize, k: usize| v[i * n + k];
        (1.0 - tx) * (1.0 - ty) * at(ix, iy)
            + tx * (1.0 - ty) * at(ix + 1, iy)
            + (1.0 - tx) * ty * at(ix, iy + 1)
            + tx * ty * at(ix + 1, iy + 1)
    }

    fn sup_norm(&self, j: usize) -> f64 {
        self.sup_norms[j]
    }

    fn domain(&self) -> [f64; 4] {
        self.domain
    }
}

/// Write any basis to the file format, sampling each mode on a
/// `grid_n x grid_n` grid over its domain.
pub fn write_basis(path: impl AsRef<Path>, basis: &impl FieldBasis, grid_n: u32) -> Result<()> {
    if grid_n < 2 {
        return Err(Error::Config("grid resolution must be at least 2".into()));
    }
    if basis.mode_count() == 0 {
        return Err(Error::Config("cannot write an empty basis".into()));
    }
    let [x0, x1, y0, y1] = basis.domain();
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(basis.mode_count() as u32)?;
    w.write_u32::<LittleEndian>(grid_n)?;
    for b in [x0, x1, y0, y1] {
        w.write_f64::<LittleEndian>(b)?;
    }
    let n = grid_n as usize;
    for j in 0..basis.mode_count() {
        w.write_f64::<LittleEndian>(basis.sup_norm(j))?;
        for ix in 0..n {
            let x = x0 + (x1 - x0) * ix as f64 / (n - 1) as f64;
            for iy in 0..n {
                let y = y0 + (y1 - y0) * iy as f64 / (n - 1) as f64;
                w.write_f64::<LittleEndian>(basis.eval_mode(j, [x, y]))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Load a tabulated basis, validating the header and the sup-norm metadata
/// against the tabulated values.
pub fn load_basis(path: impl AsRef<Path>) -> Result<TabulatedBasis> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Config(format!(
            "bad magic {magic:?}; not a basis file"
        )));
    }
    let count = r.read_u32::<LittleEndian>()?;
    let grid_n = r.read_u32::<LittleEndian>()?;
    if count == 0 {
        return Err(Error::Config("basis file contains no modes".into()));
    }
    if grid_n < 2 {
        return Err(Error::Config(format!("grid resolution {grid_n} too small")));
    }
    let mut domain = [0.0f64; 4];
    for b in &mut domain {
        *b = r.read_f64::<LittleEndian>()?;
    }
    if !(domain[1] > domain[0]) || !(domain[3] > domain[2]) {
        return Err(Error::Config(format!("degenerate domain {domain:?}")));
    }
    let n = grid_n as usize;
    let mut sup_norms = Vec::with_capacity(count as usize);
    let mut values = Vec::with_capacity(count as usize * n * n);
    for j in 0..count {
        let b_j = r.read_f64::<LittleEndian>()?;
        let mut grid_max = 0.0f64;
        for _ in 0..n * n {
            let v = r.read_f64::<LittleEndian>()?;
            if !v.is_finite() {
                return Err(Error::Config(format!("non-finite value in mode {j}")));
            }
            grid_max = grid_max.max(v.abs());
            values.push(v);
        }
        // The metadata is trusted as the true sup-norm but must dominate
        // what the grid actually shows.
        if b_j < grid_max - 1e-12 * grid_max.max(1.0) {
            return Err(Error::Config(format!(
                "mode {j}: recorded sup-norm {b_j} is below the tabulated maximum {grid_max}"
            )));
        }
        sup_norms.push(b_j);
    }
    Ok(TabulatedBasis {
        grid_n,
        domain,
        sup_norms,
        values,
    })
}

/// Check that a tabulated basis is compatible with a solver domain.
pub fn check_domain(basis: &TabulatedBasis, expected: [f64; 4]) -> Result<()> {
    let d = basis.domain();
    if d.iter().zip(&expected).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(Error::Config(format!(
            "basis domain {d:?} does not match solver domain {expected:?}"
        )));
    }
    Ok(())
}
