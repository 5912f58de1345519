//! Panel CSV, JSON documents and label files.

use std::fs;
use std::path::Path;

use grassnet::TimeSeriesPanel;
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

/// Write a panel time-major: a header of node ids, then one row per sample.
/// Values use the shortest text that parses back to the same f64.
pub fn write_panel(path: &Path, panel: &TimeSeriesPanel) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(panel.node_ids()).map_err(|e| csv_err(path, e))?;
    let s = panel.samples();
    for t in 0..panel.len() {
        let row: Vec<String> = (0..panel.node_count()).map(|v| s[(v, t)].to_string()).collect();
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_panel(path: &Path) -> CliResult<TimeSeriesPanel> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let ids: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != ids.len() {
            return Err(CliError::Validation(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                i + 1,
                rec.len(),
                ids.len()
            )));
        }
        for field in rec.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                CliError::Validation(format!("{}: row {}: bad number {field:?}", path.display(), i + 1))
            })?;
            values.push(v);
        }
        rows += 1;
    }
    let samples = DMatrix::from_row_slice(rows, ids.len(), &values).transpose();
    Ok(TimeSeriesPanel::new(samples, ids)?)
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            _ => unreachable!(),
        }
    } else {
        CliError::Validation(format!("{}: {e}", path.display()))
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Parse a JSON document; syntax and schema errors are validation errors.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("output types serialize");
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Read a labeling from a bare JSON array or from the first of the fields
/// `labels`, `sample_labels`, `sample_states` of an object. This accepts
/// cluster outputs and synth truth bundles directly.
pub fn read_labels(path: &Path) -> CliResult<Vec<usize>> {
    let value: Value = read_json(path)?;
    let array = match &value {
        Value::Array(_) => Some(&value),
        Value::Object(map) => ["labels", "sample_labels", "sample_states"]
            .iter()
            .find_map(|k| map.get(*k)),
        _ => None,
    };
    let array = array.ok_or_else(|| {
        CliError::Validation(format!(
            "{}: expected a label array or an object with labels, sample_labels or sample_states",
            path.display()
        ))
    })?;
    serde_json::from_value(array.clone())
        .map_err(|e| CliError::Validation(format!("{}: labels must be non-negative integers: {e}", path.display())))
}
