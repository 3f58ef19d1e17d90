//! Long-format CSV ingestion and emission for balanced panels.
//!
//! The contract: header `unit,time,<var1>,...,<varJ>`, one row per
//! unit-time pair, rows in any order, comma delimiter, decimal point,
//! numeric time column. Every unit must be observed at every time.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use carclust_core::{CarError, LongitudinalPanel, Mat};
use thiserror::Error;

/// Errors from panel files and report emission.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("header must start with `unit,time` and name at least one variable (got `{found}`)")]
    BadHeader { found: String },
    #[error("line {line}: duplicate row for unit `{unit}` at time `{time}`")]
    DuplicateRow {
        unit: String,
        time: String,
        line: u64,
    },
    #[error("{}", incomplete_message(.missing, .truncated))]
    IncompletePanel {
        missing: Vec<(String, String)>,
        truncated: bool,
    },
    #[error(transparent)]
    Core(#[from] CarError),
}

fn incomplete_message(cells: &[(String, String)], truncated: &bool) -> String {
    let parts: Vec<String> = cells
        .iter()
        .map(|(unit, time)| format!("(unit `{unit}`, time `{time}`)"))
        .collect();
    let more = if *truncated { " (more omitted)" } else { "" };
    format!("incomplete panel: missing {}{more}", parts.join(", "))
}

/// Reads a panel from any reader carrying the CSV contract.
pub fn read_panel<R: Read>(reader: R) -> Result<LongitudinalPanel, DataError> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = csv_reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 3 || cols[0] != "unit" || cols[1] != "time" {
        return Err(DataError::BadHeader {
            found: cols.join(","),
        });
    }
    let var_names: Vec<String> = cols[2..].iter().map(|s| s.to_string()).collect();
    let j = var_names.len();

    let mut unit_ids: Vec<String> = Vec::new();
    let mut unit_index: HashMap<String, usize> = HashMap::new();
    let mut times: Vec<f64> = Vec::new();
    let mut rows: HashMap<(usize, u64), (Vec<f64>, u64)> = HashMap::new();
    let mut time_label: HashMap<u64, String> = HashMap::new();

    for record in csv_reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != j + 2 {
            return Err(DataError::Parse {
                line,
                message: format!("expected {} fields, found {}", j + 2, record.len()),
            });
        }
        let unit = record[0].to_string();
        let time_str = record[1].to_string();
        let time: f64 = time_str.trim().parse().map_err(|_| DataError::Parse {
            line,
            message: format!("time `{time_str}` is not numeric"),
        })?;
        if !time.is_finite() {
            return Err(DataError::Parse {
                line,
                message: format!("time `{time_str}` is not finite"),
            });
        }
        let mut values = Vec::with_capacity(j);
        for (v, field) in record.iter().skip(2).enumerate() {
            let parsed: f64 = field.trim().parse().map_err(|_| DataError::Parse {
                line,
                message: format!("value `{field}` for `{}` is not numeric", var_names[v]),
            })?;
            if !parsed.is_finite() {
                return Err(DataError::Parse {
                    line,
                    message: format!("value `{field}` for `{}` is not finite", var_names[v]),
                });
            }
            values.push(parsed);
        }
        let ui = *unit_index.entry(unit.clone()).or_insert_with(|| {
            unit_ids.push(unit.clone());
            unit_ids.len() - 1
        });
        let bits = time.to_bits();
        time_label.entry(bits).or_insert_with(|| {
            times.push(time);
            time_str.clone()
        });
        if let Some((_, first_line)) = rows.get(&(ui, bits)) {
            let _ = first_line;
            return Err(DataError::DuplicateRow {
                unit,
                time: time_str,
                line,
            });
        }
        rows.insert((ui, bits), (values, line));
    }

    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut missing = Vec::new();
    for (ui, unit) in unit_ids.iter().enumerate() {
        for &time in &times {
            if !rows.contains_key(&(ui, time.to_bits())) {
                missing.push((unit.clone(), time_label[&time.to_bits()].clone()));
            }
        }
    }
    if !missing.is_empty() {
        let truncated = missing.len() > 5;
        missing.truncate(5);
        return Err(DataError::IncompletePanel { missing, truncated });
    }

    let slices: Vec<Mat> = times
        .iter()
        .map(|time| Mat::from_fn(unit_ids.len(), j, |i, v| rows[&(i, time.to_bits())].0[v]))
        .collect();
    Ok(LongitudinalPanel::new(slices, unit_ids, var_names, times)?)
}

/// Reads a panel from a CSV file.
pub fn load_panel<P: AsRef<Path>>(path: P) -> Result<LongitudinalPanel, DataError> {
    read_panel(BufReader::new(File::open(path)?))
}

/// Writes a panel in the same long format, unit-major, times ascending.
/// Values round-trip bit-exactly through `load_panel`.
pub fn write_panel<W: Write>(panel: &LongitudinalPanel, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["unit".to_string(), "time".to_string()];
    header.extend(panel.var_names().iter().cloned());
    w.write_record(&header)?;
    for (i, unit) in panel.unit_ids().iter().enumerate() {
        for (t, time) in panel.time_points().iter().enumerate() {
            let mut record = vec![unit.clone(), format!("{time}")];
            for v in 0..panel.n_vars() {
                record.push(format!("{}", panel.value(i, v, t)));
            }
            w.write_record(&record)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_panel_file<P: AsRef<Path>>(
    panel: &LongitudinalPanel,
    path: P,
) -> Result<(), DataError> {
    write_panel(panel, BufWriter::new(File::create(path)?))
}
