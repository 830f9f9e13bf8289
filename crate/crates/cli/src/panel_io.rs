//! Reading and writing forecast panels as delimited text.
//!
//! One row per hour, header row first. Files written here are
//! self-describing (see [`SchemaMap`]); files from elsewhere are read
//! through an explicit schema mapping. Timestamps may be integer epoch
//! hours or ISO-8601 instants on a whole hour; empty value cells are
//! treated as missing, which drops the row at ingestion per the panel's
//! missing-data policy.

use std::collections::HashMap;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use mpmoe_core::dataset::{ForecastPanel, IngestReport, RawRow};

use crate::error::CliError;
use crate::schema::SchemaMap;

/// Write a panel with self-describing headers and epoch-hour timestamps.
pub fn write_panel(panel: &ForecastPanel, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| CliError::runtime(format!("creating {}: {e}", path.display())))?;
    let mut header = vec!["timestamp".to_string()];
    header.extend(panel.expert_names().iter().map(|n| format!("expert:{n}")));
    header.extend(panel.feature_names().iter().map(|n| format!("feature:{n}")));
    header.push("observed".to_string());
    w.write_record(&header)?;

    for t in 0..panel.n_rows() {
        let mut record = vec![panel.timestamps()[t].to_string()];
        record.extend(panel.experts().row(t).iter().map(f64::to_string));
        record.extend(panel.features().row(t).iter().map(f64::to_string));
        record.push(panel.observed()[t].to_string());
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| CliError::runtime(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

/// Read a panel, mapping columns through `schema` when given and through
/// the self-describing header otherwise.
pub fn read_panel(
    path: &Path,
    schema: Option<&SchemaMap>,
) -> Result<(ForecastPanel, IngestReport), CliError> {
    if !path.is_file() {
        return Err(CliError::usage(format!("data file not found: {}", path.display())));
    }
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> =
        reader.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let owned_schema;
    let schema = match schema {
        Some(s) => s,
        None => {
            owned_schema = SchemaMap::from_header(&header)?;
            &owned_schema
        }
    };

    let index: HashMap<&str, usize> =
        header.iter().enumerate().map(|(i, name)| (name.as_str(), i)).collect();
    let col = |name: &String| -> Result<usize, CliError> {
        index.get(name.as_str()).copied().ok_or_else(|| {
            CliError::data(format!(
                "column {name:?} not present in {} (header: {})",
                path.display(),
                header.join(",")
            ))
        })
    };
    let ts_col = col(&schema.timestamp)?;
    let obs_col = col(&schema.observed)?;
    let expert_cols: Vec<usize> =
        schema.experts.iter().map(col).collect::<Result<_, _>>()?;
    let feature_cols: Vec<usize> =
        schema.features.iter().map(col).collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |i: usize| -> Result<&str, CliError> {
            record.get(i).map(str::trim).ok_or_else(|| {
                CliError::data(format!("row {}: too few fields", line + 2))
            })
        };
        let timestamp_hour = parse_timestamp(cell(ts_col)?)
            .map_err(|e| CliError::data(format!("row {}: {e}", line + 2)))?;
        let parse = |i: usize| -> Result<f64, CliError> {
            parse_value(cell(i)?)
                .map_err(|e| CliError::data(format!("row {}: {e}", line + 2)))
        };
        rows.push(RawRow {
            timestamp_hour,
            experts: expert_cols.iter().map(|&i| parse(i)).collect::<Result<_, _>>()?,
            features: feature_cols.iter().map(|&i| parse(i)).collect::<Result<_, _>>()?,
            observed: parse(obs_col)?,
        });
    }

    let (panel, report) =
        ForecastPanel::ingest(rows, schema.expert_names(), schema.feature_names())?;
    Ok((panel, report))
}

/// An empty cell is a missing value: it becomes NaN so ingestion drops the
/// row. Anything else must parse as a number.
fn parse_value(cell: &str) -> Result<f64, String> {
    if cell.is_empty() {
        return Ok(f64::NAN);
    }
    cell.parse::<f64>().map_err(|_| format!("unparseable value {cell:?}"))
}

/// Integer epoch hours, or an ISO-8601 instant falling exactly on an hour.
fn parse_timestamp(cell: &str) -> Result<i64, String> {
    if cell.is_empty() {
        return Err("empty timestamp".into());
    }
    if let Ok(hours) = cell.parse::<i64>() {
        return Ok(hours);
    }
    let seconds = if let Ok(dt) = DateTime::parse_from_rfc3339(cell) {
        dt.timestamp()
    } else if let Ok(naive) = NaiveDateTime::parse_from_str(cell, "%Y-%m-%dT%H:%M:%S") {
        naive.and_utc().timestamp()
    } else if let Ok(naive) = NaiveDateTime::parse_from_str(cell, "%Y-%m-%d %H:%M:%S") {
        naive.and_utc().timestamp()
    } else {
        return Err(format!(
            "unparseable timestamp {cell:?} (expected integer epoch hours or ISO-8601)"
        ));
    };
    if seconds.rem_euclid(3600) != 0 {
        return Err(format!("timestamp {cell:?} is not on a whole hour"));
    }
    Ok(seconds.div_euclid(3600))
}
