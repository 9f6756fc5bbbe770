//! Dataset ingestion: generic per-sensor CSV layouts, NAB-style single-series
//! files with label windows, and SMD-style matrix files with point labels.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::NaiveDateTime;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::series::{Dataset, Entity, TimeSeries};

/// A dataset plus optional per-timestamp anomaly labels (aligned to the
/// common time axis of the entity's series).
#[derive(Debug, Clone, Default)]
pub struct IngestResult {
    pub dataset: Dataset,
    pub labels: Option<Vec<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// Directory of `<entity>/<sensor>.csv` files with `timestamp,value` rows.
    Csv,
    /// One `timestamp,value` CSV plus a JSON file of labelled anomaly windows.
    Nab,
    /// Matrix text file (one row per timestamp, comma-separated sensors) plus
    /// a per-timestamp 0/1 label file.
    Smd,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "nab" => Ok(Format::Nab),
            "smd" => Ok(Format::Smd),
            other => Err(Error::Config(format!("unknown format `{other}`"))),
        }
    }
}

fn malformed(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

/// Parse a timestamp as epoch seconds or as a naive `YYYY-MM-DD HH:MM:SS`
/// (also with a `T` separator or a trailing fractional part).
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(epoch) = s.parse::<i64>() {
        return Some(epoch);
    }
    for fmt in [
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M:%S%.f",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

/// Read one `timestamp,value` CSV into (timestamps, values).
fn read_timestamp_value_csv(path: &Path) -> Result<(Vec<i64>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)?;
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // 1-based, after the header
        let record = record?;
        if record.len() < 2 {
            return Err(malformed(path, line, "expected `timestamp,value`"));
        }
        let ts = parse_timestamp(&record[0])
            .ok_or_else(|| malformed(path, line, format!("bad timestamp `{}`", &record[0])))?;
        let v: f64 = record[1]
            .trim()
            .parse()
            .map_err(|_| malformed(path, line, format!("bad value `{}`", &record[1])))?;
        timestamps.push(ts);
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::EmptySeries(path.display().to_string()));
    }
    Ok((timestamps, values))
}

fn infer_interval(timestamps: &[i64]) -> i64 {
    if timestamps.len() < 2 {
        return 1;
    }
    // most common positive step
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for w in timestamps.windows(2) {
        let d = w[1] - w[0];
        if d > 0 {
            *counts.entry(d).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .max_by_key(|&(_, c)| c)
        .map(|(d, _)| d)
        .unwrap_or(1)
}

fn series_from_csv(path: &Path, entity_id: &str, sensor_type: &str) -> Result<TimeSeries> {
    let (timestamps, values) = read_timestamp_value_csv(path)?;
    Ok(TimeSeries {
        id: format!("{entity_id}.{sensor_type}"),
        entity_id: entity_id.to_string(),
        sensor_type: sensor_type.to_string(),
        start_time: timestamps[0],
        sample_interval: infer_interval(&timestamps),
        values,
    })
}

/// `root/<entity>/<sensor>.csv` layout; every CSV is `timestamp,value`.
pub fn ingest_csv_dir(root: &Path) -> Result<IngestResult> {
    let mut entities = Vec::new();
    let mut series = BTreeMap::new();
    let mut entity_dirs: Vec<_> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .collect();
    entity_dirs.sort_by_key(|e| e.file_name());
    for dir in entity_dirs {
        let entity_id = dir.file_name().to_string_lossy().to_string();
        let mut sensor_files: Vec<_> = fs::read_dir(dir.path())?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().extension().is_some_and(|x| x == "csv"))
            .collect();
        sensor_files.sort_by_key(|e| e.file_name());
        let mut sensors = Vec::new();
        for file in sensor_files {
            let sensor_type = file
                .path()
                .file_stem()
                .unwrap()
                .to_string_lossy()
                .to_string();
            let s = series_from_csv(&file.path(), &entity_id, &sensor_type)?;
            sensors.push(s.id.clone());
            series.insert(s.id.clone(), s);
        }
        if !sensors.is_empty() {
            entities.push(Entity {
                id: entity_id,
                entity_type: "device".into(),
                sensors,
            });
        }
    }
    if series.is_empty() {
        return Err(Error::Config(format!(
            "no `<entity>/<sensor>.csv` files under {}",
            root.display()
        )));
    }
    Ok(IngestResult {
        dataset: Dataset { entities, series },
        labels: None,
    })
}

/// Extract NAB-style label windows for `data_path` from a parsed label JSON:
/// either a bare array of `[start, end]` pairs or an object keyed by relative
/// file path (the `combined_windows.json` layout).
fn nab_windows(labels: &Value, data_path: &Path) -> Result<Vec<(i64, i64)>> {
    let windows = match labels {
        Value::Array(_) => Some(labels),
        Value::Object(map) => {
            let file_name = data_path.file_name().unwrap().to_string_lossy();
            map.iter()
                .find(|(k, _)| k.ends_with(file_name.as_ref()))
                .map(|(_, v)| v)
                .or_else(|| (map.len() == 1).then(|| map.values().next().unwrap()))
        }
        _ => None,
    };
    let Some(Value::Array(pairs)) = windows else {
        return Err(Error::Config(
            "label JSON holds no window list for this data file".into(),
        ));
    };
    let mut out = Vec::new();
    for pair in pairs {
        let Some(arr) = pair.as_array().filter(|a| a.len() == 2) else {
            return Err(Error::Config("label window is not a [start, end] pair".into()));
        };
        let parse = |v: &Value| -> Option<i64> {
            match v {
                Value::String(s) => parse_timestamp(s),
                Value::Number(n) => n.as_i64(),
                _ => None,
            }
        };
        let (Some(start), Some(end)) = (parse(&arr[0]), parse(&arr[1])) else {
            return Err(Error::Config("unparseable label window timestamp".into()));
        };
        out.push((start, end));
    }
    Ok(out)
}

/// Single `timestamp,value` CSV plus a JSON file of anomaly windows
/// (inclusive timestamp ranges).
pub fn ingest_nab(data_path: &Path, labels_path: &Path) -> Result<IngestResult> {
    let (timestamps, values) = read_timestamp_value_csv(data_path)?;
    let sensor_type = data_path
        .file_stem()
        .unwrap()
        .to_string_lossy()
        .to_string();
    let series = TimeSeries {
        id: format!("e0.{sensor_type}"),
        entity_id: "e0".into(),
        sensor_type,
        start_time: timestamps[0],
        sample_interval: infer_interval(&timestamps),
        values,
    };

    let labels_json: Value = serde_json::from_str(&fs::read_to_string(labels_path)?)?;
    let windows = nab_windows(&labels_json, data_path)?;
    let labels = timestamps
        .iter()
        .map(|&t| windows.iter().any(|&(s, e)| s <= t && t <= e))
        .collect();

    let entity = Entity {
        id: "e0".into(),
        entity_type: "device".into(),
        sensors: vec![series.id.clone()],
    };
    let mut map = BTreeMap::new();
    map.insert(series.id.clone(), series);
    Ok(IngestResult {
        dataset: Dataset {
            entities: vec![entity],
            series: map,
        },
        labels: Some(labels),
    })
}

/// Matrix text file: one row per timestamp, comma-separated sensor values;
/// label file: one 0/1 per line (same row count).
pub fn ingest_smd(data_path: &Path, labels_path: Option<&Path>) -> Result<IngestResult> {
    let text = fs::read_to_string(data_path)?;
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut rows = 0usize;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| malformed(data_path, i + 1, "non-numeric field"))?;
        if columns.is_empty() {
            columns = vec![Vec::new(); values.len()];
        } else if values.len() != columns.len() {
            return Err(malformed(
                data_path,
                i + 1,
                format!("expected {} fields, got {}", columns.len(), values.len()),
            ));
        }
        for (c, v) in columns.iter_mut().zip(values) {
            c.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::EmptySeries(data_path.display().to_string()));
    }

    let labels = match labels_path {
        None => None,
        Some(lp) => {
            let ltext = fs::read_to_string(lp)?;
            let labels: Vec<bool> = ltext
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| match l.trim() {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(malformed(lp, i + 1, format!("bad label `{other}`"))),
                })
                .collect::<Result<_>>()?;
            if labels.len() != rows {
                return Err(Error::Config(format!(
                    "label count {} does not match {} data rows",
                    labels.len(),
                    rows
                )));
            }
            Some(labels)
        }
    };

    let mut series = BTreeMap::new();
    let mut sensors = Vec::new();
    let width = columns.len();
    for (c, values) in columns.into_iter().enumerate() {
        let sensor_type = format!("m{c:02}");
        let id = format!("e0.{sensor_type}");
        sensors.push(id.clone());
        series.insert(
            id.clone(),
            TimeSeries {
                id,
                entity_id: "e0".into(),
                sensor_type,
                start_time: 0,
                sample_interval: 60,
                values,
            },
        );
    }
    debug_assert_eq!(sensors.len(), width);
    Ok(IngestResult {
        dataset: Dataset {
            entities: vec![Entity {
                id: "e0".into(),
                entity_type: "machine".into(),
                sensors,
            }],
            series,
        },
        labels,
    })
}
