//! On-disk layout of the pipeline outputs and small file helpers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use hamrom::io::{format_f64, load_matrix, save_matrix};
use hamrom::matrix::DenseMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn snapshots(&self) -> PathBuf {
        self.root.join("snapshots")
    }

    pub fn basis(&self, method: &str) -> PathBuf {
        self.root.join("basis").join(method)
    }

    pub fn deim(&self) -> PathBuf {
        self.root.join("deim")
    }

    pub fn simulate(&self) -> PathBuf {
        self.root.join("simulate")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn require(path: &Path, stage: &'static str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact {
            path: path.to_path_buf(),
            stage,
        })
    }
}

pub fn write_matrix(path: &Path, m: &DenseMatrix<f64>) -> CliResult<()> {
    save_matrix(m, path).map_err(|e| CliError::from_core(path.display().to_string(), e))
}

pub fn read_matrix(path: &Path, stage: &'static str) -> CliResult<DenseMatrix<f64>> {
    require(path, stage)?;
    load_matrix(path).map_err(|e| CliError::from_core(path.display().to_string(), e))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("sidecar serializes to JSON");
    fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn read_json<D: DeserializeOwned>(path: &Path, stage: &'static str) -> CliResult<D> {
    require(path, stage)?;
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Writes a CSV file with a header line; numbers use the round-trip format.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> CliResult<()> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let line: Vec<String> = row.into_iter().map(format_f64).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}

/// Reads a CSV written by [`write_table`]: header plus numeric rows.
pub fn read_table(path: &Path, stage: &'static str) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    require(path, stage)?;
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .map(|h| h.split(',').map(str::to_string).collect())
        .unwrap_or_default();
    let rows = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|e| CliError::Config(format!("{}: '{tok}': {e}", path.display())))
                })
                .collect::<CliResult<Vec<_>>>()
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok((header, rows))
}
