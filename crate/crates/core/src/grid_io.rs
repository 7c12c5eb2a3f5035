//! Flat binary dump of lattice data.
//!
//! Layout (all little-endian 64-bit words): an 8-word header
//! `[magic, version, kind, n, spacing, seed, reserved0, reserved1]`
//! followed by one `f64` per cell in row-major order. `magic` and `seed`
//! are stored as raw bit patterns, the rest as ordinary floats. `kind` is
//! 0 for bulk and 1 for boundary. Fields leave both reserved words zero;
//! heat states store their time in `reserved0`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{KpzError, Result};
use crate::lattice::{Geometry, Lattice};

pub const GRID_MAGIC: u64 = 0x4B50_5A47_5249_4431; // "KPZGRID1"
pub const GRID_VERSION: f64 = 1.0;

/// Decoded contents of a grid dump.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDump {
    pub lattice: Lattice,
    pub seed: u64,
    pub reserved: [f64; 2],
    pub values: Vec<f64>,
}

pub fn write_grid(
    path: &Path,
    lattice: &Lattice,
    seed: u64,
    reserved: [f64; 2],
    values: &[f64],
) -> Result<()> {
    if values.len() != lattice.cells() {
        return Err(KpzError::MismatchedLattice(format!(
            "{} values for {} cells",
            values.len(),
            lattice.cells()
        )));
    }
    let file = File::create(path).map_err(|e| KpzError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let kind = match lattice.geometry() {
        Geometry::Bulk => 0.0,
        Geometry::Boundary => 1.0,
    };
    let header = [
        f64::from_bits(GRID_MAGIC),
        GRID_VERSION,
        kind,
        lattice.n() as f64,
        lattice.spacing(),
        f64::from_bits(seed),
        reserved[0],
        reserved[1],
    ];
    for v in header.iter().chain(values) {
        w.write_all(&v.to_le_bytes()).map_err(|e| KpzError::io(path, e))?;
    }
    w.flush().map_err(|e| KpzError::io(path, e))
}

pub fn read_grid(path: &Path) -> Result<GridDump> {
    let file = File::open(path).map_err(|e| KpzError::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| KpzError::io(path, e))?;
    if bytes.len() % 8 != 0 || bytes.len() < 64 {
        return Err(KpzError::Parse(format!("{}: truncated grid", path.display())));
    }
    let words: Vec<u64> = bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    if words[0] != GRID_MAGIC {
        return Err(KpzError::Parse(format!("{}: bad magic", path.display())));
    }
    if f64::from_bits(words[1]) != GRID_VERSION {
        return Err(KpzError::Parse(format!("{}: unsupported version", path.display())));
    }
    let geometry = match f64::from_bits(words[2]) {
        k if k == 0.0 => Geometry::Bulk,
        k if k == 1.0 => Geometry::Boundary,
        k => return Err(KpzError::Parse(format!("unknown kind {k}"))),
    };
    let n = f64::from_bits(words[3]) as usize;
    let lattice = Lattice::new(geometry, n, f64::from_bits(words[4]))?;
    let values: Vec<f64> = words[8..].iter().map(|&b| f64::from_bits(b)).collect();
    if values.len() != lattice.cells() {
        return Err(KpzError::Parse(format!(
            "{}: expected {} values, found {}",
            path.display(),
            lattice.cells(),
            values.len()
        )));
    }
    Ok(GridDump {
        lattice,
        seed: words[5],
        reserved: [f64::from_bits(words[6]), f64::from_bits(words[7])],
        values,
    })
}
