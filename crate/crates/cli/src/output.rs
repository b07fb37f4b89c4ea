//! Writing records to a file or stdout, and reading meta-wrapped JSON files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use semrank_core::jsonl::{emit_jsonl, RunMeta};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub fn write_records<V: Serialize>(out: Option<&Path>, meta: &RunMeta, items: &[V]) -> Result<(), CliError> {
    match out {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::io(path, e))?;
            emit_jsonl(BufWriter::new(file), Some(meta), items).map_err(|e| CliError::io(path, e))
        }
        None => emit_jsonl(std::io::stdout().lock(), Some(meta), items).map_err(|e| CliError::io(Path::new("-"), e)),
    }
}

#[derive(Serialize)]
struct WrappedRef<'a, V> {
    meta: &'a RunMeta,
    #[serde(flatten)]
    body: &'a V,
}

/// A JSON document with the run meta as its first field.
pub fn write_json<V: Serialize>(out: Option<&Path>, meta: &RunMeta, body: &V) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(&WrappedRef { meta, body }).expect("serializable");
    match out {
        Some(path) => std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|e| CliError::io(Path::new("-"), e))
        }
    }
}

#[derive(Deserialize)]
struct Wrapped<V> {
    #[serde(default)]
    meta: Option<RunMeta>,
    body: V,
}

/// Reads a file written by [`write_json`] with its body under `key`.
pub fn read_json_field<V: DeserializeOwned>(path: &Path, key: &str) -> Result<(Option<RunMeta>, V), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let parse_err = |e: serde_json::Error| CliError::Json { path: path.to_path_buf(), message: e.to_string() };
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(parse_err)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::Json { path: path.to_path_buf(), message: "expected a JSON object".into() })?;
    let body = obj
        .remove(key)
        .ok_or_else(|| CliError::Json { path: path.to_path_buf(), message: format!("missing field '{key}'") })?;
    let meta = obj.remove("meta");
    let w: Wrapped<V> = serde_json::from_value(serde_json::json!({"meta": meta, "body": body})).map_err(parse_err)?;
    Ok((w.meta, w.body))
}
