//! Structured outputs: CSV tables with unit comments and the run manifest.
//!
//! Every CSV opens with `#` comment lines (format version, table name,
//! manifest id, per-column units) followed by a single header row. Numbers
//! are written in Rust's shortest round-trip form, so identical inputs give
//! byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_LOG: &str = "manifests.jsonl";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::F(x)
    }
}
impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::I(x)
    }
}
impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::I(x as i64)
    }
}
impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::I(x as i64)
    }
}
impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::S(x.to_string())
    }
}

fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(x) => fmt_f64(*x),
            Cell::I(i) => i.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

/// A named table; `columns` pairs each column name with its unit
/// (`-` for dimensionless or categorical).
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<(String, String)>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[(&str, &str)]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|(c, u)| (c.to_string(), u.to_string())).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match table `{}`", self.name);
        self.rows.push(row);
    }

    /// CSV text, comment block included.
    pub fn render(&self, manifest_id: &str) -> Result<String> {
        let mut head = String::new();
        let _ = writeln!(head, "# dirac-lattice format {FORMAT_VERSION}, table {}", self.name);
        let _ = writeln!(head, "# manifest {manifest_id}");
        let units: Vec<String> = self.columns.iter().map(|(c, u)| format!("{c}={u}")).collect();
        let _ = writeln!(head, "# units: {}", units.join(", "));
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let fail = |e: csv::Error| Error::Format { path: self.name.clone(), msg: e.to_string() };
        w.write_record(self.columns.iter().map(|(c, _)| c.as_str())).map_err(fail)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(fail)?;
        }
        let body = w.into_inner().map_err(|e| Error::Format { path: self.name.clone(), msg: e.to_string() })?;
        Ok(head + &String::from_utf8(body).expect("csv output is utf-8"))
    }
}

/// Provenance for one CLI run. The id hashes only the fields that determine
/// the outputs, so timing and worker count never change file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub id: String,
    pub subcommand: String,
    /// Resolved configuration, defaults included.
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub code_version: String,
    /// Input path → SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub workers: usize,
    pub wall_clock_s: f64,
}

#[derive(Serialize)]
struct IdFields<'a> {
    format_version: u32,
    subcommand: &'a str,
    config: &'a BTreeMap<String, String>,
    seed: u64,
    code_version: &'a str,
    inputs: &'a BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config: BTreeMap<String, String>, seed: u64, inputs: BTreeMap<String, String>) -> Self {
        let code_version = env!("CARGO_PKG_VERSION").to_string();
        let fields = IdFields { format_version: FORMAT_VERSION, subcommand, config: &config, seed, code_version: &code_version, inputs: &inputs };
        let json = serde_json::to_vec(&fields).expect("manifest fields serialise");
        let id = hex(&Sha256::digest(&json))[..16].to_string();
        Self {
            format_version: FORMAT_VERSION,
            id,
            subcommand: subcommand.to_string(),
            config,
            seed,
            code_version,
            inputs,
            outputs: Vec::new(),
            workers: 1,
            wall_clock_s: 0.0,
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let p = path.as_ref();
    let data = std::fs::read(p).map_err(|e| Error::io(p, e))?;
    Ok(hex(&Sha256::digest(&data)))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Write every table as `<name>.csv` plus a `summary.json`, then append the
/// manifest (with the output list filled in) to the manifest log.
pub fn emit_tables(tables: &[Table], summary: &serde_json::Value, dir: impl AsRef<Path>, manifest: &mut RunManifest) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for t in tables {
        let path = dir.join(format!("{}.csv", t.name));
        write_file(&path, t.render(&manifest.id)?.as_bytes())?;
        written.push(path);
    }
    let summary = serde_json::json!({ "manifest": manifest.id, "summary": summary });
    let path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Format { path: path.display().to_string(), msg: e.to_string() })?;
    text.push('\n');
    write_file(&path, text.as_bytes())?;
    written.push(path);
    manifest.outputs = written.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect();
    append_manifest(dir, manifest)?;
    Ok(written)
}

pub fn append_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let path = dir.join(MANIFEST_LOG);
    let line = serde_json::to_string(manifest).map_err(|e| Error::Format { path: path.display().to_string(), msg: e.to_string() })?;
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&path).map_err(|e| Error::io(&path, e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
}

/// Read a CSV written by [`Table::render`] back into header and rows.
pub fn read_table(text: &str) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let body: String = text.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    let mut r = csv::ReaderBuilder::new().from_reader(body.as_bytes());
    let fail = |e: csv::Error| Error::Format { path: "<table>".into(), msg: e.to_string() };
    let header = r.headers().map_err(fail)?.iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.map(|r| r.iter().map(String::from).collect())).collect::<std::result::Result<_, _>>().map_err(fail)?;
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new("bands", &[("kx", "1/a"), ("band", "-"), ("omega_re", "gamma")]);
        t.push(vec![0.1.into(), "lower".into(), (-1.5e-7).into()]);
        t.push(vec![2.0.into(), "upper".into(), 0.0.into()]);
        t
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = Table::new("edge", &[("k", "1/a"), ("omega_re", "gamma")]);
        let text = t.render("abc").unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2], "# units: k=1/a, omega_re=gamma");
        assert_eq!(lines[3], "k,omega_re");
        let (h, rows) = read_table(&text).unwrap();
        assert_eq!(h, ["k", "omega_re"]);
        assert!(rows.is_empty());
    }

    #[test]
    fn values_round_trip() {
        let text = sample().render("abc").unwrap();
        let (_, rows) = read_table(&text).unwrap();
        assert_eq!(rows[0], ["0.1", "lower", "-1.5e-7"]);
        assert_eq!(rows[0][2].parse::<f64>().unwrap(), -1.5e-7);
        assert_eq!(rows[1][2], "0");
    }

    #[test]
    fn emission_is_deterministic() {
        let dir = std::env::temp_dir().join(format!("dl-io-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        let cfg: BTreeMap<String, String> = [("m".to_string(), "41".to_string())].into();
        let mut outs = Vec::new();
        for workers in [1, 4] {
            let mut m = RunManifest::new("edge", cfg.clone(), 7, BTreeMap::new());
            m.workers = workers;
            m.wall_clock_s = workers as f64;
            emit_tables(&[sample()], &serde_json::json!({"n": 2}), &dir, &mut m).unwrap();
            outs.push((std::fs::read(dir.join("bands.csv")).unwrap(), std::fs::read(dir.join("summary.json")).unwrap()));
        }
        assert_eq!(outs[0], outs[1]);
        let log = std::fs::read_to_string(dir.join(MANIFEST_LOG)).unwrap();
        let ms: Vec<RunManifest> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(ms.len(), 2);
        assert_eq!(ms[0].id, ms[1].id);
        assert_eq!(ms[0].outputs, ["bands.csv", "summary.json"]);
        let other = RunManifest::new("edge", cfg, 8, BTreeMap::new());
        assert_ne!(other.id, ms[0].id);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
