//! Table serialization: CSV with a resolved-config comment line, JSON, and
//! the `<out>.meta.json` sidecar. All files are written to a temporary path
//! and atomically renamed into place, so readers never observe a partial
//! file and reruns with identical parameters are byte-identical.

use crate::config::{Failure, FormatArg};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

/// Every parameter needed to recompute a data file from scratch, written to
/// the sidecar and (field for field) to the `#` comment line of CSV output.
#[derive(Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub gamma: f64,
    pub lambda: f64,
    pub temperature: f64,
    pub shape: &'static str,
    pub bath: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_step: Option<f64>,
    pub t_tot: f64,
    /// Requested integration step.
    pub step: f64,
    /// Actual spacing of the emitted time grid, when the command has one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_max: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_opt: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_opt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<serde_json::Value>,
    pub columns: Vec<&'static str>,
}

impl Meta {
    /// The `key=value` pairs of the CSV comment line, in a fixed order.
    fn header_pairs(&self) -> Vec<(&'static str, String)> {
        let mut pairs: Vec<(&'static str, String)> = vec![
            ("tool", self.tool.to_string()),
            ("version", self.version.to_string()),
            ("command", self.command.clone()),
            ("gamma", fmt_f64(self.gamma)),
            ("lambda", fmt_f64(self.lambda)),
            ("temperature", fmt_f64(self.temperature)),
            ("shape", self.shape.to_string()),
            ("bath", self.bath.to_string()),
        ];
        if let Some(v) = self.r {
            pairs.push(("r", fmt_f64(v)));
        }
        if let Some(v) = self.r_min {
            pairs.push(("r_min", fmt_f64(v)));
        }
        if let Some(v) = self.r_max {
            pairs.push(("r_max", fmt_f64(v)));
        }
        if let Some(v) = self.r_step {
            pairs.push(("r_step", fmt_f64(v)));
        }
        pairs.push(("t_tot", fmt_f64(self.t_tot)));
        pairs.push(("step", fmt_f64(self.step)));
        if let Some(v) = self.grid_step {
            pairs.push(("grid_step", fmt_f64(v)));
        }
        if let Some(v) = self.n_max {
            pairs.push(("n_max", v.to_string()));
        }
        if let Some(v) = self.n_opt {
            pairs.push(("n_opt", v.to_string()));
        }
        if let Some(v) = self.h_opt {
            pairs.push(("h_opt", fmt_f64(v)));
        }
        pairs
    }
}

/// One value of a table cell.
#[derive(Clone, Copy)]
pub enum Cell {
    Int(i64),
    Num(f64),
    Bool(bool),
}

impl Cell {
    fn render_csv(self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => fmt_f64(v),
            Cell::Bool(v) => v.to_string(),
        }
    }

    fn render_json(self) -> serde_json::Value {
        match self {
            Cell::Int(v) => serde_json::Value::from(v),
            Cell::Num(v) => serde_json::Value::from(v),
            Cell::Bool(v) => serde_json::Value::from(v),
        }
    }
}

/// Scientific notation at the shortest length that round-trips to the exact
/// same f64, so parsing an emitted file loses no precision.
fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

/// Write one table plus its metadata sidecar.
pub fn write_table(path: &Path, meta: &Meta, rows: &[Vec<Cell>], format: FormatArg) -> Result<(), Failure> {
    let body = match format {
        FormatArg::Csv => render_csv(meta, rows),
        FormatArg::Json => render_json(meta, rows)?,
    };
    atomic_write(path, body.as_bytes())?;

    let sidecar = sidecar_path(path);
    let meta_body = serde_json::to_string_pretty(meta)
        .map_err(|e| Failure::Numerical(format!("metadata serialization failed: {e}")))?;
    atomic_write(&sidecar, meta_body.as_bytes())?;
    Ok(())
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    std::path::PathBuf::from(name)
}

fn render_csv(meta: &Meta, rows: &[Vec<Cell>]) -> String {
    let mut text = String::from("#");
    for (key, value) in meta.header_pairs() {
        let _ = write!(text, " {key}={value}");
    }
    text.push('\n');
    text.push_str(&meta.columns.join(","));
    text.push('\n');
    for row in rows {
        let rendered: Vec<String> = row.iter().map(|c| c.render_csv()).collect();
        text.push_str(&rendered.join(","));
        text.push('\n');
    }
    text
}

fn render_json(meta: &Meta, rows: &[Vec<Cell>]) -> Result<String, Failure> {
    let rows_json: Vec<Vec<serde_json::Value>> = rows
        .iter()
        .map(|row| row.iter().map(|c| c.render_json()).collect())
        .collect();
    let doc = serde_json::json!({
        "meta": meta,
        "columns": meta.columns,
        "rows": rows_json,
    });
    serde_json::to_string_pretty(&doc)
        .map_err(|e| Failure::Numerical(format!("JSON serialization failed: {e}")))
}

/// Write via a temporary file in the same directory, then rename into place.
fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| {
                Failure::Config(format!(
                    "key `out`: cannot create directory {}: {e}",
                    parent.display()
                ))
            })?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| {
        Failure::Config(format!("key `out`: cannot write {}: {e}", tmp.display()))
    })?;
    std::fs::rename(&tmp, path).map_err(|e| {
        Failure::Config(format!("key `out`: cannot move output into {}: {e}", path.display()))
    })?;
    Ok(())
}
