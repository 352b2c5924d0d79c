//! Manifest, CSV tables and binary field snapshots.
//!
//! Snapshot files (`.itmf`) are little-endian:
//!
//! | offset | type     | content                          |
//! |--------|----------|----------------------------------|
//! | 0      | [u8; 4]  | magic `ITMF`                     |
//! | 4      | u32      | format version, currently 1      |
//! | 8      | u32      | dimension `d`                    |
//! | 12     | u32      | points per axis `N`              |
//! | 16     | u32      | dtype tag, 1 = f64               |
//! | 20     | f64      | time                             |
//! | 28     | f64      | domain length `L`                |
//! | 36     | u32      | component count, 2               |
//! | 40     | f64 × Nᵈ | `u`, row-major with x fastest    |
//! | …      | f64 × Nᵈ | `∂ₜu`                            |

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evolve::WaveState;
use crate::geometry::{Grid, ScalarField};

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"ITMF";
pub const SNAPSHOT_VERSION: u32 = 1;
pub const DTYPE_F64: u32 = 1;
pub const SNAPSHOT_HEADER_BYTES: usize = 40;

/// SHA-256 over the canonical JSON of `config` followed by the seed.
pub fn config_hash<C: Serialize>(config: &C, seed: u64) -> Result<String> {
    let json = serde_json::to_string(config)?;
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    hasher.update(seed.to_le_bytes());
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

pub fn write_snapshot(path: &Path, state: &WaveState) -> Result<()> {
    let grid = state.u.grid();
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&SNAPSHOT_MAGIC)?;
    for v in [SNAPSHOT_VERSION, grid.dim() as u32, grid.points() as u32, DTYPE_F64] {
        out.write_all(&v.to_le_bytes())?;
    }
    out.write_all(&state.t.to_le_bytes())?;
    out.write_all(&grid.length().to_le_bytes())?;
    out.write_all(&2u32.to_le_bytes())?;
    for field in [&state.u, &state.ut] {
        for v in field.values() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn bad(path: &Path, what: &str) -> Error {
    Error::InvalidArgument(format!("{}: {what}", path.display()))
}

pub fn read_snapshot(path: &Path) -> Result<WaveState> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < SNAPSHOT_HEADER_BYTES || bytes[..4] != SNAPSHOT_MAGIC {
        return Err(bad(path, "not a snapshot file"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    if u32_at(4) != SNAPSHOT_VERSION || u32_at(16) != DTYPE_F64 || u32_at(36) != 2 {
        return Err(bad(path, "unsupported version, dtype or component count"));
    }
    let grid = Grid::new(u32_at(8) as usize, f64_at(28), u32_at(12) as usize)?;
    let n = grid.len();
    if bytes.len() != SNAPSHOT_HEADER_BYTES + 16 * n {
        return Err(bad(path, "payload size does not match the header"));
    }
    let field = |k: usize| {
        let start = SNAPSHOT_HEADER_BYTES + 8 * n * k;
        let values = (0..n).map(|i| f64_at(start + 8 * i)).collect();
        ScalarField::new(&grid, values)
    };
    WaveState::new(field(0)?, field(1)?, f64_at(20))
}

/// CSV with a header row, flushed on [`CsvTable::finish`].
pub struct CsvTable {
    path: PathBuf,
    writer: csv::Writer<File>,
}

impl CsvTable {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(header)?;
        Ok(CsvTable {
            path: path.to_path_buf(),
            writer,
        })
    }

    pub fn row(&mut self, cells: &[String]) -> Result<()> {
        self.writer.write_record(cells)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.writer.flush()?;
        Ok(self.path)
    }
}

/// Shortest round-trip text for a float, empty for NaN.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

/// Run descriptor written next to the tables.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub kind: String,
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub threads: usize,
    pub started_unix_s: f64,
    pub wall_time_s: f64,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
    pub summary: serde_json::Value,
    pub timings: serde_json::Value,
    pub config: serde_json::Value,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_grid;

    #[test]
    fn snapshot_round_trip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let g = make_grid(2, 3.0, 8).unwrap();
        let s = WaveState::new(
            ScalarField::from_fn(&g, |x| x[0] - 2.0 * x[1]),
            ScalarField::from_fn(&g, |x| x[0] * x[1]),
            1.25,
        )
        .unwrap();
        let path = dir.path().join("s.itmf");
        write_snapshot(&path, &s).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), SNAPSHOT_HEADER_BYTES + 2 * 64 * 8);
        assert_eq!(&bytes[..4], b"ITMF");
        assert_eq!(f64::from_le_bytes(bytes[20..28].try_into().unwrap()), 1.25);
        let first_ut = SNAPSHOT_HEADER_BYTES + 64 * 8 + 9 * 8;
        assert_eq!(f64::from_le_bytes(bytes[first_ut..first_ut + 8].try_into().unwrap()), s.ut.values()[9]);
        assert_eq!(read_snapshot(&path).unwrap(), s);
        std::fs::write(&path, &bytes[..50]).unwrap();
        assert!(read_snapshot(&path).is_err());
    }

    #[test]
    fn hash_depends_on_seed_and_content() {
        let a = config_hash(&vec![1.0, 2.0], 0).unwrap();
        assert_eq!(a.len(), 64);
        assert_eq!(a, config_hash(&vec![1.0, 2.0], 0).unwrap());
        assert_ne!(a, config_hash(&vec![1.0, 2.0], 1).unwrap());
        assert_ne!(a, config_hash(&vec![1.0, 2.5], 0).unwrap());
    }
}
