//! Report serialization: CSV tables, JSON documents and the dense binary
//! matrix dump.

use std::fs;
use std::io;
use std::path::Path;

use bandlab_core::linalg::Matrix;
use serde::Serialize;

/// Which text formats a run writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Formats {
    pub csv: bool,
    pub json: bool,
}

impl Formats {
    pub const BOTH: Formats = Formats { csv: true, json: true };
}

/// Named artifacts produced by one run, in the order they are written.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    pub csv: Vec<(String, Vec<u8>)>,
    pub json: Vec<(String, Vec<u8>)>,
    pub binary: Vec<(String, Vec<u8>)>,
}

impl RunOutput {
    pub fn add_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> io::Result<()> {
        self.csv.push((format!("{name}.csv"), csv_bytes(rows)?));
        Ok(())
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        self.json.push((format!("{name}.json"), json_bytes(value)?));
        Ok(())
    }

    pub fn add_binary(&mut self, name: &str, bytes: Vec<u8>) {
        self.binary.push((name.to_string(), bytes));
    }

    /// Writes the selected formats into `dir` and returns the file names.
    pub fn write(&self, dir: &Path, formats: Formats) -> io::Result<Vec<String>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let groups = [
            (formats.csv, &self.csv),
            (formats.json, &self.json),
            (true, &self.binary),
        ];
        for (enabled, files) in groups {
            if !enabled {
                continue;
            }
            for (name, bytes) in files {
                fs::write(dir.join(name), bytes)?;
                written.push(name.clone());
            }
        }
        Ok(written)
    }
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> io::Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for row in rows {
        wtr.serialize(row).map_err(io::Error::other)?;
    }
    wtr.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

pub fn json_bytes<T: Serialize>(value: &T) -> io::Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
    bytes.push(b'\n');
    Ok(bytes)
}

const BLAB_MAGIC: &[u8; 4] = b"BLAB";
const BLAB_HEADER: usize = 16;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BlabError {
    #[error("not a BLAB file")]
    BadMagic,
    #[error("truncated BLAB file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

/// Dense little-endian dump: `"BLAB"`, `u32 N`, `u32` reserved, 4 bytes of
/// zero padding, then `N^2` row-major `f64`s.
pub fn blab_bytes(h: &Matrix<f64>) -> Vec<u8> {
    let n = h.rows();
    let mut out = Vec::with_capacity(BLAB_HEADER + 8 * n * n);
    out.extend_from_slice(BLAB_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&[0u8; 4]);
    for v in h.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_blab(bytes: &[u8]) -> Result<Matrix<f64>, BlabError> {
    if bytes.len() < BLAB_HEADER {
        return Err(BlabError::Truncated {
            expected: BLAB_HEADER,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != BLAB_MAGIC {
        return Err(BlabError::BadMagic);
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let expected = BLAB_HEADER + 8 * n * n;
    if bytes.len() != expected {
        return Err(BlabError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let data = bytes[BLAB_HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Matrix::from_row_major(n, n, data).expect("length checked"))
}
