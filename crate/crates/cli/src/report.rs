//! Report encoding: flat JSON objects (or arrays of them) and CSV tables,
//! each row carrying the resolved configuration.

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::RunConfig;

pub type Row = Map<String, Value>;

/// Flattens `value` (a struct serializing to an object) into a row.
pub fn to_row<T: Serialize>(value: &T) -> Row {
    match serde_json::to_value(value).expect("report types serialize") {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("value".into(), other);
            m
        }
    }
}

/// Config fields first, then the result fields (which win on a name clash),
/// then the timestamp when requested.
pub fn with_config(cfg: &RunConfig, row: Row, timestamp: Option<u64>) -> Row {
    let mut out = to_row(cfg);
    for (k, v) in row {
        out.insert(k, v);
    }
    if let Some(ts) = timestamp {
        out.insert("timestamp".into(), Value::from(ts));
    }
    out
}

pub fn unix_timestamp() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// One object for a single row, an array otherwise.
pub fn rows_to_json(rows: &[Row]) -> String {
    let value = if rows.len() == 1 {
        Value::Object(rows[0].clone())
    } else {
        Value::Array(rows.iter().cloned().map(Value::Object).collect())
    };
    let mut s = serde_json::to_string_pretty(&value).expect("json encoding");
    s.push('\n');
    s
}

fn csv_cell(v: &Value) -> String {
    let s = match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s
    }
}

/// Header from the union of keys in first-seen order.
pub fn rows_to_csv(rows: &[Row]) -> String {
    let mut keys: Vec<&String> = Vec::new();
    for r in rows {
        for k in r.keys() {
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
    }
    let mut out = keys.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(",");
    out.push('\n');
    for r in rows {
        let line: Vec<String> = keys.iter().map(|k| r.get(*k).map(csv_cell).unwrap_or_default()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
