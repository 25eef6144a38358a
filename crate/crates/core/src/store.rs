//! Versioned JSON persistence for learned tables.
//!
//! Every table learned from peace traffic (allow-list, TTL table, rate
//! table, qname-frequency baseline) is written as a JSON document wrapped in
//! a [`TableFile`] envelope carrying a format version, a kind tag, and the
//! learning metadata (when it was built and over how long a window). Loads
//! validate both the version and the kind so a rate table can never be
//! misread as an allow-list.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Current on-disk format version for table files.
pub const TABLE_FORMAT_VERSION: u32 = 1;

/// Envelope around a persisted table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableFile<T> {
    /// On-disk format version; see [`TABLE_FORMAT_VERSION`].
    pub version: u32,
    /// What the payload is: `"allowlist"`, `"ttltable"`, `"ratetable"`,
    /// or `"fqbaseline"`.
    pub kind: String,
    /// Trace timestamp at which the table was built.
    pub built_at: f64,
    /// Length in seconds of the learning window that produced it.
    pub learn_span: f64,
    /// The table itself.
    pub data: T,
}

/// Errors from saving or loading a table file.
#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed table file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("table file holds kind {found:?}, expected {expected:?}")]
    WrongKind { expected: String, found: String },
    #[error("unsupported table file version {0} (supported: {TABLE_FORMAT_VERSION})")]
    UnsupportedVersion(u32),
}

/// Write `data` to `path` as a versioned table file.
pub fn save_table<T: Serialize>(
    path: &Path,
    kind: &str,
    built_at: f64,
    learn_span: f64,
    data: &T,
) -> Result<(), StoreError> {
    let file = TableFile {
        version: TABLE_FORMAT_VERSION,
        kind: kind.to_string(),
        built_at,
        learn_span,
        data,
    };
    let mut out = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut out, &file)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Load a table file from `path`, checking the version and kind tag.
pub fn load_table<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<TableFile<T>, StoreError> {
    let text = fs::read_to_string(path)?;
    let file: TableFile<T> = serde_json::from_str(&text)?;
    if file.version != TABLE_FORMAT_VERSION {
        return Err(StoreError::UnsupportedVersion(file.version));
    }
    if file.kind != kind {
        return Err(StoreError::WrongKind {
            expected: kind.to_string(),
            found: file.kind,
        });
    }
    Ok(file)
}
