use std::io::Write;
use std::path::Path;

use serde_json::{Map, Value};

use crate::config::RunConfig;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes)?,
        None => std::io::stdout().lock().write_all(bytes)?,
    }
    Ok(())
}

/// JSON object with `schema_version` and `config_hash` added, to `--out` or stdout.
pub fn json(cfg: &RunConfig, body: Value) -> Result<(), CliError> {
    let mut obj = match body {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("value".into(), other);
            m
        }
    };
    obj.insert("schema_version".into(), SCHEMA_VERSION.into());
    obj.insert("config_hash".into(), cfg.hash().into());
    let mut text = serde_json::to_string_pretty(&Value::Object(obj)).expect("json value serializes");
    text.push('\n');
    emit(cfg.out.as_deref(), text.as_bytes())
}

/// Appends the `# config_hash=` trailer.
pub fn with_trailer(cfg: &RunConfig, mut csv: String) -> String {
    if !csv.ends_with('\n') {
        csv.push('\n');
    }
    csv.push_str(&format!("# config_hash={}\n", cfg.hash()));
    csv
}

pub fn csv(cfg: &RunConfig, body: String) -> Result<(), CliError> {
    emit(cfg.out.as_deref(), with_trailer(cfg, body).as_bytes())
}

pub fn dump(cfg: &RunConfig, path: &Path, body: String) -> Result<(), CliError> {
    emit(Some(path), with_trailer(cfg, body).as_bytes())
}

/// Shortest round-trip text, in exponent form for very small or large magnitudes.
pub fn fmt(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

/// [`fmt`], or empty for missing values.
pub fn num(x: Option<f64>) -> String {
    x.map(fmt).unwrap_or_default()
}
