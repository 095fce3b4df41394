//! Report emission: output-directory resolution, '#'-headered CSV tables
//! with an optional JSON mirror, and the run manifest.
//!
//! Float cells print with a fixed scientific format so identical runs are
//! byte-identical; the manifest echoes the full effective configuration
//! plus mesh hashes, making every table reproducible from it.

use std::env;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;

/// Resolved output directory: --out-dir, then NULLCONE_OUT_DIR, then ./out.
#[derive(Debug, Clone)]
pub struct OutDir {
    path: PathBuf,
}

impl OutDir {
    pub fn resolve(flag: Option<&Path>) -> OutDir {
        let path = flag
            .map(Path::to_path_buf)
            .or_else(|| env::var_os("NULLCONE_OUT_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        OutDir { path }
    }

    pub fn create(&self) -> io::Result<()> {
        fs::create_dir_all(&self.path)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }
}

/// One table cell; Missing prints empty in CSV and null in JSON.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Int(i64),
    Num(f64),
    Text(String),
    Missing,
}

impl Value {
    fn csv(&self) -> String {
        match self {
            Value::Int(k) => k.to_string(),
            Value::Num(x) => format!("{x:.12e}"),
            Value::Text(s) => s.clone(),
            Value::Missing => String::new(),
        }
    }

    fn json(&self) -> serde_json::Value {
        match self {
            Value::Int(k) => serde_json::json!(k),
            Value::Num(x) if x.is_finite() => serde_json::json!(x),
            Value::Num(_) | Value::Missing => serde_json::Value::Null,
            Value::Text(s) => serde_json::json!(s),
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Value {
        Value::Num(x)
    }
}

impl From<usize> for Value {
    fn from(k: usize) -> Value {
        Value::Int(k as i64)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Value {
        Value::Text(s.to_string())
    }
}

impl From<bool> for Value {
    fn from(b: bool) -> Value {
        Value::Int(b as i64)
    }
}

/// A named result table; written as `<name>.csv` and optionally `.json`.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Table {
        Table {
            name: name.to_string(),
            comments: Vec::new(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) {
        self.comments.push(line.into());
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn csv_text(&self) -> String {
        let mut s = String::new();
        for line in &self.comments {
            s.push_str("# ");
            s.push_str(line);
            s.push('\n');
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Value::csv).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn json_text(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                serde_json::Value::Array(row.iter().map(Value::json).collect())
            })
            .collect();
        let doc = serde_json::json!({
            "name": self.name,
            "comments": self.comments,
            "columns": self.columns,
            "rows": rows,
        });
        let mut text = serde_json::to_string_pretty(&doc).expect("table serialization");
        text.push('\n');
        text
    }

    pub fn write(&self, dir: &OutDir, json_mirror: bool) -> io::Result<()> {
        fs::write(dir.file(&format!("{}.csv", self.name)), self.csv_text())?;
        if json_mirror {
            fs::write(dir.file(&format!("{}.json", self.name)), self.json_text())?;
        }
        Ok(())
    }
}

/// FNV-1a over the bit patterns of both meshes; identifies a grid exactly.
pub fn mesh_hash(u: &[f64], v: &[f64]) -> u64 {
    let mut h = 0xcbf29ce484222325u64;
    for &x in u.iter().chain(v.iter()) {
        for b in x.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

/// The run manifest: tool version, invocation, notes, full config echo.
#[derive(Debug)]
pub struct Manifest {
    header: Vec<String>,
    notes: Vec<(String, String)>,
    echo: String,
}

impl Manifest {
    pub fn new(command: &str, cfg: &ExperimentConfig, dir: &OutDir, threads: usize) -> Manifest {
        Manifest {
            header: vec![
                format!("version = {}", env!("CARGO_PKG_VERSION")),
                format!("command = {command}"),
                format!("out_dir = {}", dir.path().display()),
                format!("threads = {threads}"),
            ],
            notes: Vec::new(),
            echo: cfg.echo(),
        }
    }

    pub fn note(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.notes.push((key.into(), value.into()));
    }

    pub fn write(&self, dir: &OutDir) -> io::Result<()> {
        let mut s = String::from("# nullcone run manifest\n");
        for line in &self.header {
            s.push_str(line);
            s.push('\n');
        }
        for (k, v) in &self.notes {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(v);
            s.push('\n');
        }
        s.push_str("\n# effective configuration\n");
        s.push_str(&self.echo);
        fs::write(dir.file("manifest.txt"), s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout_is_stable() {
        let mut t = Table::new("demo", &["k", "value", "flag", "note"]);
        t.comment("a header line");
        t.push(vec![1usize.into(), 0.5.into(), true.into(), Value::Missing]);
        assert_eq!(
            t.csv_text(),
            "# a header line\nk,value,flag,note\n1,5.000000000000e-1,1,\n"
        );
    }

    #[test]
    fn json_mirror_nulls_non_finite_cells() {
        let mut t = Table::new("demo", &["x"]);
        t.push(vec![f64::NAN.into()]);
        t.push(vec![1.0.into()]);
        let doc: serde_json::Value = serde_json::from_str(&t.json_text()).unwrap();
        assert_eq!(doc["rows"][0][0], serde_json::Value::Null);
        assert_eq!(doc["rows"][1][0], serde_json::json!(1.0));
    }

    #[test]
    fn mesh_hash_separates_grids() {
        let a = mesh_hash(&[0.0, 0.5], &[0.5, 1.0]);
        let b = mesh_hash(&[0.0, 0.5], &[0.5, 1.0 + 1e-15]);
        assert_ne!(a, b);
        assert_eq!(a, mesh_hash(&[0.0, 0.5], &[0.5, 1.0]));
    }
}
