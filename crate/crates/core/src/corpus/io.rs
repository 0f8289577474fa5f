//! JSON Lines storage: one object per program with `id`, `profile`,
//! `dialect`, `tokens` and `labels` (token-index string → meta-type).

use super::{LabeledProgram, MetaType};
use crate::dialect::Dialect;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: u64,
    pub profile: u32,
    pub dialect: Dialect,
    pub tokens: Vec<String>,
    pub labels: BTreeMap<String, MetaType>,
}

impl From<&LabeledProgram> for DatasetRecord {
    fn from(p: &LabeledProgram) -> Self {
        DatasetRecord {
            id: p.id,
            profile: p.profile,
            dialect: p.dialect,
            tokens: p.tokens.clone(),
            labels: p.labels.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("line {line}: field `{field}`: {message}")]
    Field { line: usize, field: &'static str, message: String },
    #[error("line {line}: invalid JSON: {message}")]
    Json { line: usize, message: String },
}

pub fn write_dataset(path: impl AsRef<Path>, programs: &[LabeledProgram]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let io_err = |source| DatasetError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for p in programs {
        let line = serde_json::to_string(&DatasetRecord::from(p)).expect("records always serialize");
        w.write_all(line.as_bytes()).map_err(io_err)?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<LabeledProgram>, DatasetError> {
    let path = path.as_ref();
    let io_err = |source| DatasetError::Io { path: path.display().to_string(), source };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(&line, i + 1)?);
    }
    Ok(out)
}

fn field<'a>(obj: &'a Map<String, Value>, line: usize, name: &'static str) -> Result<&'a Value, DatasetError> {
    obj.get(name).ok_or(DatasetError::Field { line, field: name, message: "missing".into() })
}

/// Parses one JSON Lines record. `line` is 1-based and only used in errors.
pub fn parse_record(text: &str, line: usize) -> Result<LabeledProgram, DatasetError> {
    let bad = |field: &'static str, message: &str| DatasetError::Field { line, field, message: message.to_string() };
    let value: Value = serde_json::from_str(text).map_err(|e| DatasetError::Json { line, message: e.to_string() })?;
    let obj = value.as_object().ok_or(DatasetError::Json { line, message: "record is not an object".into() })?;

    let id = field(obj, line, "id")?.as_u64().ok_or_else(|| bad("id", "expected a non-negative integer"))?;
    let profile = field(obj, line, "profile")?
        .as_u64()
        .and_then(|p| u32::try_from(p).ok())
        .ok_or_else(|| bad("profile", "expected a non-negative integer"))?;
    let dialect = field(obj, line, "dialect")?
        .as_str()
        .ok_or_else(|| bad("dialect", "expected a string"))?
        .parse::<Dialect>()
        .map_err(|e| bad("dialect", &e))?;
    let tokens = field(obj, line, "tokens")?
        .as_array()
        .ok_or_else(|| bad("tokens", "expected an array of strings"))?
        .iter()
        .map(|t| t.as_str().map(str::to_string).ok_or_else(|| bad("tokens", "expected an array of strings")))
        .collect::<Result<Vec<_>, _>>()?;
    let mut labels = BTreeMap::new();
    for (k, v) in field(obj, line, "labels")?.as_object().ok_or_else(|| bad("labels", "expected an object"))? {
        let pos: usize = k.parse().map_err(|_| bad("labels", &format!("key `{k}` is not a token index")))?;
        if pos >= tokens.len() {
            return Err(bad("labels", &format!("position {pos} out of range for {} tokens", tokens.len())));
        }
        let t = v
            .as_str()
            .ok_or_else(|| bad("labels", "expected meta-type strings"))?
            .parse::<MetaType>()
            .map_err(|e| bad("labels", &e))?;
        labels.insert(pos, t);
    }
    Ok(LabeledProgram { id, profile, dialect, tokens, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, GenConfig};

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let mut ps = generate_corpus(1, 60, Dialect::Alpha, &GenConfig::default());
        ps.extend(generate_corpus(2, 40, Dialect::Beta, &GenConfig::default()));
        write_dataset(&path, &ps).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), ps);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 100);
        assert!(!text.contains('\r'));
    }

    #[test]
    fn missing_tokens_is_named() {
        let err = parse_record(r#"{"id":1,"profile":0,"dialect":"alpha","labels":{}}"#, 4).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 4") && msg.contains("`tokens`"), "{msg}");
    }

    #[test]
    fn bad_label_value_is_named() {
        let err = parse_record(r#"{"id":1,"profile":0,"dialect":"beta","tokens":["a"],"labels":{"0":"int"}}"#, 2)
            .unwrap_err();
        assert!(err.to_string().contains("`labels`"));
    }

    #[test]
    fn empty_file_is_empty_stream() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(read_dataset(&path).unwrap().is_empty());
    }
}
