//! CSV reports with a JSON metadata sidecar.
//!
//! Reports are built in memory and written in one pass: a `name.csv` table
//! and a `name.meta.json` companion carrying the configuration echo and
//! run-level results. Floats are printed with 17 significant digits so the
//! files round-trip bit-exactly, and nothing time- or host-dependent is
//! ever written; two runs with the same configuration and seed produce
//! byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// One table cell. Floats carry full precision; text cells hold method and
/// provenance notes.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Cell {
        Cell::Float(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Cell {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Cell {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Cell {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Cell {
        Cell::Text(v)
    }
}

/// Render a float with 17 significant digits, enough to reconstruct the
/// exact bit pattern.
pub fn full_precision(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_escape(text: &str) -> String {
    if text.contains(',') || text.contains('"') || text.contains('\n') {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

/// A named table plus its metadata sidecar.
#[derive(Debug, Clone)]
pub struct Report {
    name: String,
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
    meta: BTreeMap<String, Value>,
}

impl Report {
    pub fn new(name: &str, columns: &[&str]) -> Report {
        Report {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            meta: BTreeMap::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    /// Append one row; the width must match the header.
    pub fn push_row(&mut self, row: Vec<Cell>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::InvalidArgument(format!(
                "report {} expects {} columns, row has {}",
                self.name,
                self.columns.len(),
                row.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn set_meta_str(&mut self, key: &str, value: &str) {
        self.meta.insert(key.to_string(), Value::String(value.to_string()));
    }

    /// Floats go into the sidecar as full-precision strings; JSON numbers
    /// would be re-rendered by readers and lose the exact bits.
    pub fn set_meta_float(&mut self, key: &str, value: f64) {
        self.meta.insert(key.to_string(), Value::String(full_precision(value)));
    }

    pub fn set_meta_int(&mut self, key: &str, value: u64) {
        self.meta.insert(key.to_string(), Value::Number(value.into()));
    }

    /// Echo the configuration key/value listing under the `config.` prefix.
    pub fn set_config_echo(&mut self, entries: &[(String, String)]) {
        for (key, value) in entries {
            self.meta
                .insert(format!("config.{key}"), Value::String(value.clone()));
        }
    }

    /// The CSV text: header line plus one line per row, `\n` endings.
    pub fn csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let mut first = true;
            for cell in row {
                if !first {
                    out.push(',');
                }
                first = false;
                match cell {
                    Cell::Float(v) => {
                        let _ = write!(out, "{}", full_precision(*v));
                    }
                    Cell::Int(v) => {
                        let _ = write!(out, "{v}");
                    }
                    Cell::Text(t) => out.push_str(&csv_escape(t)),
                }
            }
            out.push('\n');
        }
        out
    }

    /// The sidecar text: pretty JSON with sorted keys.
    pub fn meta_json(&self) -> String {
        let map: Map<String, Value> =
            self.meta.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        let mut text = serde_json::to_string_pretty(&Value::Object(map))
            .expect("string/number metadata always serializes");
        text.push('\n');
        text
    }

    /// Write `name.csv` and `name.meta.json` under `dir`, creating it if
    /// needed. Returns the CSV path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{}.csv", self.name));
        std::fs::write(&csv_path, self.csv())?;
        let meta_path = dir.join(format!("{}.meta.json", self.name));
        std::fs::write(meta_path, self.meta_json())?;
        Ok(csv_path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_through_the_csv_text() {
        let mut r = Report::new("t", &["x", "note"]);
        let v = 0.1 + 0.2;
        r.push_row(vec![v.into(), "sum".into()]).unwrap();
        let csv = r.csv();
        let line = csv.lines().nth(1).unwrap();
        let back: f64 = line.split(',').next().unwrap().parse().unwrap();
        assert_eq!(back.to_bits(), v.to_bits());
    }

    #[test]
    fn header_and_rows_are_width_checked() {
        let mut r = Report::new("t", &["a", "b"]);
        assert!(r.push_row(vec![1.0.into()]).is_err());
        assert!(r.push_row(vec![1.0.into(), 2.0.into()]).is_ok());
        assert_eq!(r.csv().lines().count(), 2);
    }

    #[test]
    fn text_cells_with_commas_are_quoted() {
        let mut r = Report::new("t", &["note"]);
        r.push_row(vec!["a, b \"c\"".into()]).unwrap();
        assert_eq!(r.csv().lines().nth(1).unwrap(), "\"a, b \"\"c\"\"\"");
    }

    #[test]
    fn sidecar_keys_are_sorted_and_stable() {
        let mut r = Report::new("t", &["x"]);
        r.set_meta_str("zeta", "1");
        r.set_meta_float("alpha", 1.5);
        r.set_meta_int("mid", 3);
        let text = r.meta_json();
        let alpha = text.find("alpha").unwrap();
        let mid = text.find("mid").unwrap();
        let zeta = text.find("zeta").unwrap();
        assert!(alpha < mid && mid < zeta);
        assert_eq!(text, r.meta_json());
    }

    #[test]
    fn write_creates_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = Report::new("pair", &["x"]);
        r.push_row(vec![2.0.into()]).unwrap();
        let csv_path = r.write(dir.path()).unwrap();
        assert!(csv_path.ends_with("pair.csv"));
        assert!(dir.path().join("pair.meta.json").exists());
        let text = std::fs::read_to_string(csv_path).unwrap();
        assert_eq!(text, "x\n2.0000000000000000e0\n");
    }
}
