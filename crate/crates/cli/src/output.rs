use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::CliResult;

pub const SCHEMA_VERSION: u32 = 1;

/// Writes `text` to `path`, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, text)?;
        }
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(path, &text)
}

pub fn csv_string<T: Serialize>(rows: &[T]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::error::CliError::runtime(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// JSON cannot carry infinities; map non-finite values to `null`.
pub fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}
