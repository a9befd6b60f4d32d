//! Output plumbing: float formatting, small CSV tables, run directories with
//! a lockfile, `config.echo` and a `meta` sidecar for anything that varies
//! between reruns (timestamps, wall-clock timings).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{Error, Result};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Parse a float written by [`fmt_f64`] (or any Rust float literal).
pub fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("bad float `{s}`: {e}")))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Float(v) => f.write_str(&fmt_f64(*v)),
            Cell::Text(v) => f.write_str(v),
        }
    }
}

/// A header plus rows; rendered with `,` separators and a trailing newline.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    /// Column as floats; text and integer cells are converted where possible.
    pub fn column_f64(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.iter().position(|h| h == name)?;
        self.rows
            .iter()
            .map(|r| match &r[idx] {
                Cell::Int(v) => Some(*v as f64),
                Cell::Float(v) => Some(*v),
                Cell::Text(t) => t.parse().ok(),
            })
            .collect()
    }
}

pub fn unix_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// An output directory held exclusively for the lifetime of the value.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    lock: PathBuf,
    meta: Vec<(String, String)>,
}

pub const LOCK_FILE: &str = ".lock";

impl RunDir {
    pub fn acquire(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        let lock = root.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                use std::io::Write;
                writeln!(f, "{}", std::process::id())?;
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(Error::Locked(root.to_path_buf()))
            }
            Err(e) => return Err(e.into()),
        }
        let mut dir = Self { root: root.to_path_buf(), lock, meta: Vec::new() };
        dir.note("started_unix", unix_seconds());
        Ok(dir)
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let p = self.root.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&p, contents)?;
        Ok(p)
    }

    pub fn write_table(&self, name: &str, table: &Table) -> Result<PathBuf> {
        self.write(name, &table.to_csv())
    }

    /// Record a non-reproducible fact for the `meta` sidecar.
    pub fn note(&mut self, key: &str, value: impl std::fmt::Display) {
        self.meta.push((key.to_string(), value.to_string()));
    }

    fn flush_meta(&mut self) -> Result<()> {
        self.note("finished_unix", unix_seconds());
        let mut s = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(s, "{k}={v}");
        }
        fs::write(self.root.join("meta"), s)?;
        Ok(())
    }

    /// Write `meta` and release the lock.
    pub fn finish(mut self) -> Result<()> {
        self.flush_meta()?;
        fs::remove_file(&self.lock)?;
        self.lock = PathBuf::new();
        Ok(())
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        if !self.lock.as_os_str().is_empty() {
            let _ = fs::remove_file(&self.lock);
        }
    }
}
