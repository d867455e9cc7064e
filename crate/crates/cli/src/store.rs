//! On-disk sample store: one CSV per block plus `manifest.json`.
//!
//! Values are written with 17 significant digits, which round-trips every
//! finite f64 exactly. Files are written to a temporary name in the target
//! directory and renamed into place.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use geomc_core::DenseMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub file: String,
    pub rows: usize,
    pub cols: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    /// full-rank | low-rank | dynamic
    pub kind: String,
    pub seed: u64,
    pub config_sha256: String,
    pub n_samples: usize,
    pub wall_time_secs: f64,
    pub acceptance: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modified: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parametrization: Option<String>,
    /// Run directory this run read its samples from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Retained 1-based rows of the source chain.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retained: Option<(usize, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage_95: Option<f64>,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.flush().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

pub fn matrix_csv(header: &[String], m: &DenseMatrix) -> CliResult<Vec<u8>> {
    if header.len() != m.cols() {
        return Err(CliError::Io(format!("{} header names for {} columns", header.len(), m.cols())));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for i in 0..m.rows() {
        w.write_record((0..m.cols()).map(|j| format!("{:.16e}", m[(i, j)]))).map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn read_matrix(path: &Path) -> CliResult<(Vec<String>, DenseMatrix)> {
    let data = |m: String| CliError::Data(format!("{}: {m}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| data(e.to_string()))?;
    let header: Vec<String> = rdr.headers().map_err(|e| data(e.to_string()))?.iter().map(str::to_string).collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| data(e.to_string()))?;
        for cell in rec.iter() {
            values.push(cell.parse::<f64>().map_err(|_| data(format!("row {}: cannot parse '{cell}'", rows + 2)))?);
        }
        rows += 1;
    }
    let cols = header.len();
    if rows == 0 || cols == 0 {
        return Err(data("empty sample block".into()));
    }
    let m = DenseMatrix::from_fn(rows, cols, |i, j| values[i * cols + j]);
    Ok((header, m))
}

pub fn read_manifest(dir: &Path) -> CliResult<Manifest> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Output directory of one run; tracks every file it writes.
pub struct Store {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Store {
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, file: &str, header: &[String], m: &DenseMatrix) -> CliResult<()> {
        let bytes = matrix_csv(header, m)?;
        write_atomic(&self.dir.join(file), &bytes)?;
        self.files.push(FileEntry {
            file: file.to_string(),
            rows: m.rows(),
            cols: m.cols(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Writes the manifest listing every emitted file.
    pub fn finish(self, mut manifest: Manifest) -> CliResult<PathBuf> {
        manifest.files = self.files;
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        let path = self.dir.join(MANIFEST);
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}
