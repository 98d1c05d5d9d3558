use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::config::ExperimentConfig;
use crate::CliError;

/// A table with a header row; every cell is already formatted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    /// The `t,quantity,value,path_id` series layout.
    pub fn series() -> Self {
        Self::new(&["t", "quantity", "value", "path_id"])
    }

    pub fn push(&mut self, t: f64, quantity: &str, value: f64, path: Option<u64>) {
        self.rows.push(vec![num(t), quantity.to_string(), num(value), path.map(|p| p.to_string()).unwrap_or_default()]);
    }

    pub fn push_row(&mut self, cells: Vec<String>) {
        self.rows.push(cells);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| CliError::Output(e.to_string()))
    }
}

/// Shortest round-trip decimal form with `.` separator.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else if v.is_nan() {
        "NaN".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn reproducibility(cfg: &ExperimentConfig) -> Value {
    json!({
        "seed": cfg.seed,
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": cfg.hash(),
    })
}

pub fn config_json(cfg: &ExperimentConfig) -> Value {
    let mut m = Map::new();
    for (k, v) in cfg.entries() {
        m.insert(k.to_string(), Value::String(v));
    }
    Value::Object(m)
}

pub fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn output_paths(cfg: &ExperimentConfig, out_dir: &Path) -> (PathBuf, PathBuf) {
    (out_dir.join(&cfg.output_csv), out_dir.join(&cfg.output_json))
}
