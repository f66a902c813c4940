//! JSONL manifests: a header line, one record per line, and an optional
//! completion terminator.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use super::ClipRecord;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Stage names a manifest may carry in its header.
pub const MANIFEST_STAGES: [&str; 7] = [
    "split", "scored", "filtered", "sampled", "captioned", "final", "finetune",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestFile {
    pub stage: String,
    pub records: Vec<ClipRecord>,
    /// Count carried by the `stage_complete` terminator, if present.
    pub terminator: Option<u64>,
}

impl ManifestFile {
    pub fn is_complete(&self) -> bool {
        self.terminator == Some(self.records.len() as u64)
    }
}

pub fn sort_records(records: &mut [ClipRecord]) {
    records.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
}

/// Writes header and records. The records must be strictly sorted by clip_id.
pub fn write_manifest(path: &Path, stage: &str, records: &[ClipRecord]) -> Result<PathBuf> {
    write_impl(path, stage, records, false)
}

/// As [`write_manifest`], followed by the `{"stage_complete":true,"count":N}` line.
pub fn write_stage_manifest(path: &Path, stage: &str, records: &[ClipRecord]) -> Result<PathBuf> {
    write_impl(path, stage, records, true)
}

fn write_impl(path: &Path, stage: &str, records: &[ClipRecord], terminate: bool) -> Result<PathBuf> {
    if !MANIFEST_STAGES.contains(&stage) {
        return Err(Error::UnknownStage(stage.to_string()));
    }
    for pair in records.windows(2) {
        if pair[0].clip_id >= pair[1].clip_id {
            return Err(Error::UnsortedInput(format!(
                "{} precedes {}",
                pair[0].clip_id, pair[1].clip_id
            )));
        }
    }
    for r in records {
        r.validate()?;
    }

    let mut buf = Vec::with_capacity(64 + records.len() * 320);
    let header = serde_json::json!({ "schema_version": SCHEMA_VERSION, "stage": stage });
    serde_json::to_writer(&mut buf, &header).expect("header serializes");
    buf.push(b'\n');
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(|e| Error::InvalidRecord {
            clip_id: r.clip_id.clone(),
            message: e.to_string(),
        })?;
        buf.push(b'\n');
    }
    if terminate {
        // written by hand to keep the key order stable
        buf.extend_from_slice(format!("{{\"stage_complete\":true,\"count\":{}}}\n", records.len()).as_bytes());
    }

    atomic_write(path, &buf)?;
    Ok(path.to_path_buf())
}

/// Writes via a sibling temp file and rename; the target is untouched on failure.
pub(crate) fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("not a file path: {}", path.display())))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    let result = (|| {
        let file = File::create(&tmp)?;
        let mut w = BufWriter::new(file);
        w.write_all(bytes)?;
        w.flush()?;
        w.get_ref().sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ClipRecord>> {
    Ok(read_manifest_file(path)?.records)
}

pub fn read_manifest_file(path: &Path) -> Result<ManifestFile> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let malformed = |line: usize, message: String| Error::MalformedManifest {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut stage = None;
    let mut records = Vec::new();
    let mut terminator = None;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        if terminator.is_some() {
            return Err(malformed(lineno, "content after stage terminator".into()));
        }
        let value: Value =
            serde_json::from_str(&line).map_err(|e| malformed(lineno, e.to_string()))?;
        let Value::Object(obj) = value else {
            return Err(malformed(lineno, "expected a JSON object".into()));
        };

        if stage.is_none() {
            stage = Some(parse_header(path, lineno, &obj)?);
            continue;
        }
        if obj.contains_key("stage_complete") {
            terminator = Some(parse_terminator(&obj).ok_or_else(|| {
                malformed(lineno, "invalid stage terminator".into())
            })?);
            continue;
        }
        let record: ClipRecord = serde_json::from_value(Value::Object(obj))
            .map_err(|e| malformed(lineno, e.to_string()))?;
        record
            .validate()
            .map_err(|e| malformed(lineno, e.to_string()))?;
        records.push(record);
    }

    let stage = stage.ok_or_else(|| malformed(1, "missing header line".into()))?;
    Ok(ManifestFile {
        stage,
        records,
        terminator,
    })
}

fn parse_header(path: &Path, line: usize, obj: &Map<String, Value>) -> Result<String> {
    let version = obj.get("schema_version").cloned().unwrap_or(Value::Null);
    if version.as_u64() != Some(u64::from(SCHEMA_VERSION)) {
        return Err(Error::SchemaMismatch {
            path: path.to_path_buf(),
            expected: SCHEMA_VERSION,
            found: version,
        });
    }
    obj.get("stage")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Error::MalformedManifest {
            path: path.to_path_buf(),
            line,
            message: "header lacks a stage name".into(),
        })
}

fn parse_terminator(obj: &Map<String, Value>) -> Option<u64> {
    match obj.get("stage_complete") {
        Some(Value::Bool(true)) => obj.get("count").and_then(Value::as_u64),
        _ => None,
    }
}
