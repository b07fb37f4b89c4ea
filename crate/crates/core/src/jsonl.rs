//! JSON-lines files with an optional leading `{"meta": ...}` record.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Seed, config hash and versions stamped on every generated file so a run can be replayed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct RunMeta {
    pub seed: u64,
    pub config_hash: String,
    #[serde(default)]
    pub versions: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct MetaLine<M> {
    meta: M,
}

fn io_err(path: &Path, source: std::io::Error) -> JsonlError {
    JsonlError::Io { path: path.display().to_string(), source }
}

fn is_meta(value: &serde_json::Value) -> bool {
    value.as_object().is_some_and(|o| o.len() == 1 && o.contains_key("meta"))
}

/// Parses every record, skipping blank lines and meta lines.
pub fn parse_jsonl<V: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<V>, JsonlError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| JsonlError::Parse { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| JsonlError::Parse { line: i + 1, message: e.to_string() })?;
        if is_meta(&value) {
            continue;
        }
        out.push(serde_json::from_value(value).map_err(|e| JsonlError::Parse { line: i + 1, message: e.to_string() })?);
    }
    Ok(out)
}

pub fn read_jsonl<V: DeserializeOwned>(path: &Path) -> Result<Vec<V>, JsonlError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    parse_jsonl(BufReader::new(file))
}

/// The meta record of a file, if its first non-blank line is one.
pub fn read_meta(path: &Path) -> Result<Option<RunMeta>, JsonlError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| io_err(path, e))?;
        if !line.trim().is_empty() {
            return Ok(serde_json::from_str::<MetaLine<RunMeta>>(&line).ok().map(|m| m.meta));
        }
    }
    Ok(None)
}

pub fn emit_jsonl<V: Serialize, W: Write>(mut writer: W, meta: Option<&RunMeta>, items: &[V]) -> std::io::Result<()> {
    if let Some(meta) = meta {
        serde_json::to_writer(&mut writer, &MetaLine { meta })?;
        writer.write_all(b"\n")?;
    }
    for item in items {
        serde_json::to_writer(&mut writer, item)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn write_jsonl<V: Serialize>(path: &Path, meta: Option<&RunMeta>, items: &[V]) -> Result<(), JsonlError> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    emit_jsonl(BufWriter::new(file), meta, items).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meta_lines_are_skipped() {
        let meta = RunMeta { seed: 7, config_hash: "abc".into(), versions: BTreeMap::new() };
        let mut buf = Vec::new();
        emit_jsonl(&mut buf, Some(&meta), &[1u32, 2, 3]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"meta\":{\"seed\":7"));
        let back: Vec<u32> = parse_jsonl(&buf[..]).unwrap();
        assert_eq!(back, vec![1, 2, 3]);
    }

    #[test]
    fn parse_error_names_the_line() {
        let err = parse_jsonl::<u32, _>("1\n\nnope\n".as_bytes()).unwrap_err();
        assert!(matches!(err, JsonlError::Parse { line: 3, .. }));
    }
}
