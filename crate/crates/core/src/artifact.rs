//! Run-directory artifacts: file names, JSON read/write, timestamps.
//!
//! Every stage writes plain pretty-printed JSON so that reruns with the same
//! inputs produce identical files apart from the timestamp fields listed in
//! [`TIMESTAMP_FIELDS`].

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

pub const PLAN_FILE: &str = "plan.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const AUDIT_FILE: &str = "audit.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const HISTOGRAM_CSV: &str = "histogram.csv";
pub const IMAGES_DIR: &str = "images";

/// Fields that hold wall-clock time and are ignored when comparing artifacts.
pub const TIMESTAMP_FIELDS: [&str; 2] = ["created_at", "timestamp"];

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{path} not found; run `{stage}` first")]
    MissingUpstream { path: PathBuf, stage: &'static str },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: invalid JSON artifact: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// RFC 3339 UTC timestamp. Honors `SOURCE_DATE_EPOCH` for reproducible runs.
pub fn timestamp_now() -> String {
    let now = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0))
        .unwrap_or_else(chrono::Utc::now);
    now.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact types serialize");
    s.push('\n');
    s
}

/// Writes via a temporary sibling and rename, so readers never see a partial file.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ArtifactError> {
    write_bytes(path, to_json_string(value).as_bytes())
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), ArtifactError> {
    let io_err = |source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(io_err)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(io_err)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ArtifactError> {
    let bytes = fs::read(path).map_err(|source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|source| ArtifactError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a stage input, mapping a missing file to "run `stage` first".
pub fn read_upstream<T: DeserializeOwned>(
    path: &Path,
    stage: &'static str,
) -> Result<T, ArtifactError> {
    if !path.exists() {
        return Err(ArtifactError::MissingUpstream {
            path: path.to_path_buf(),
            stage,
        });
    }
    read_json(path)
}

/// Removes timestamp fields at any depth, for artifact comparison.
pub fn strip_timestamps(mut value: Value) -> Value {
    fn walk(v: &mut Value) {
        match v {
            Value::Object(map) => {
                for key in TIMESTAMP_FIELDS {
                    map.remove(key);
                }
                map.values_mut().for_each(walk);
            }
            Value::Array(items) => items.iter_mut().for_each(walk),
            _ => {}
        }
    }
    walk(&mut value);
    value
}
