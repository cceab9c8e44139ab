//! CSV tables and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::Result;

/// Rows sharing a header; the first column names the curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Table { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        render(&self.header, self.rows.iter())
    }

    /// Curve names in order of first appearance.
    pub fn curves(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r[0].as_str()) {
                out.push(&r[0]);
            }
        }
        out
    }

    pub fn curve_csv(&self, name: &str) -> String {
        render(&self.header, self.rows.iter().filter(|r| r[0] == name))
    }
}

fn render<'a>(header: &[&str], rows: impl Iterator<Item = &'a Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

/// File-name-safe form of a curve name.
pub fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect()
}

/// Writes `<stem>.csv` plus one `curves/<stem>__<curve>.csv` per curve and
/// returns the paths relative to `dir`.
pub fn write_tables(dir: &Path, stem: &str, table: &Table) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir.join("curves"))?;
    let mut files = Vec::new();
    let main = PathBuf::from(format!("{stem}.csv"));
    fs::write(dir.join(&main), table.to_csv())?;
    files.push(main);
    for curve in table.curves() {
        let p = PathBuf::from("curves").join(format!("{stem}__{}.csv", file_safe(curve)));
        fs::write(dir.join(&p), table.curve_csv(curve))?;
        files.push(p);
    }
    Ok(files)
}

#[derive(Debug, Clone, Serialize)]
pub struct Overrides {
    pub trials: Option<u64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Grid {
    pub antennas: Vec<usize>,
    pub snr_db: Vec<f64>,
}

/// Everything needed to reproduce a run. `config` holds the effective
/// scenario text with overrides applied; feeding it back through `--config`
/// reproduces the CSVs bit for bit.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub name: String,
    pub kind: String,
    pub source: String,
    pub seed: u64,
    pub trials: u64,
    pub overrides: Overrides,
    pub threads: usize,
    pub library_version: String,
    pub started_unix_seconds: u64,
    pub wall_clock_seconds: f64,
    pub grid: Grid,
    pub files: Vec<String>,
    pub config: String,
}

pub fn write_manifest(dir: &Path, stem: &str, manifest: &Manifest) -> Result<PathBuf> {
    let text = toml::to_string(manifest).map_err(|e| crate::Error::Io(e.to_string()))?;
    let p = PathBuf::from(format!("{stem}.manifest.toml"));
    fs::write(dir.join(&p), text)?;
    Ok(p)
}
