use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use impact_melnikov::numeric::format_float;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Resolved;
use crate::Failure;

/// The provenance echo written at the top of every CSV and inside every JSON file.
pub fn provenance(command: &str, params: &impl Serialize, run: &Resolved) -> Value {
    json!({
        "command": command,
        "params": params,
        "system": run.system,
        "tolerance": run.tolerance,
        "seed": run.seed,
    })
}

/// A CSV table with a `#`-prefixed header. Floats use shortest round-trip formatting.
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(provenance: &Value, columns: &[&str]) -> Self {
        let mut text = String::new();
        let _ = writeln!(text, "# impact-melnikov {}", provenance["command"].as_str().unwrap_or(""));
        let _ = writeln!(text, "# config: {provenance}");
        text.push_str(&columns.join(","));
        text.push('\n');
        Self { text }
    }

    /// Header followed by an already formatted body whose first line names the columns.
    pub fn with_body(provenance: &Value, body: &str) -> Self {
        let mut table = Self::new(provenance, &[]);
        table.text.pop();
        table.text.push_str(body.trim_start_matches('\n'));
        table
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<PathBuf, Failure> {
        write_file(dir, name, &self.text)
    }
}

pub fn write_json(dir: &Path, name: &str, provenance: &Value, body: Value) -> Result<PathBuf, Failure> {
    let doc = json!({ "config": provenance, "result": body });
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::config(e.to_string()))?;
    text.push('\n');
    write_file(dir, name, &text)
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<PathBuf, Failure> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

pub fn cells<const N: usize>(values: [f64; N]) -> Vec<String> {
    values.iter().map(|&v| format_float(v)).collect()
}

pub fn to_value(value: &impl Serialize) -> Value {
    serde_json::to_value(value).expect("result types serialize")
}
