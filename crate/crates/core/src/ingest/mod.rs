//! Streaming ingestion of zipped, delimited registry dumps.
//!
//! Members are read in name order on a background thread and handed out
//! as row batches; binding a batch to [`DeviceRecord`]s is left to the
//! consumer so it can run on worker threads.

mod decode;
mod reader;
mod schema;

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use decode::{EncodingPolicy, GbkReader, MemberEncoding};
pub use reader::{BoundBatch, Dataset, MemberInfo, Records, RowBatch, RowBatches, open_dataset};
pub use schema::{DEFAULT_SCHEMA_JSON, SchemaMap};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("archive {path} unreadable: {reason}")]
    ArchiveUnreadable { path: String, reason: String },
    #[error("{member}: header lacks required columns {missing:?}")]
    HeaderMismatch { member: String, missing: Vec<String> },
    #[error("{member}:{line}: {reason}")]
    EncodingError { member: String, line: u64, reason: String },
    #[error("{member}:{line}: {reason}")]
    Io { member: String, line: u64, reason: String },
    #[error("schema map: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    pub encoding: EncodingPolicy,
    /// Used when the schema map does not set its own delimiter.
    pub delimiter: u8,
    pub batch_rows: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            encoding: EncodingPolicy::AutoDetect,
            delimiter: b',',
            batch_rows: 4096,
        }
    }
}

/// Row accounting for one ingest. `rows_read` always equals
/// `rows_emitted + rows_skipped_malformed`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub rows_read: u64,
    pub rows_emitted: u64,
    pub rows_skipped_malformed: u64,
    pub per_error_counts: BTreeMap<String, u64>,
    /// The first few skipped rows as `member:line: reason`.
    pub examples: Vec<String>,
    #[serde(skip)]
    pub elapsed: Duration,
}

const MAX_EXAMPLES: usize = 20;

impl IngestStats {
    pub fn absorb(&mut self, batch: &BoundBatch) {
        self.rows_read += batch.rows_read;
        self.rows_emitted += batch.records.len() as u64;
        for skip in &batch.skipped {
            self.rows_skipped_malformed += 1;
            *self.per_error_counts.entry(skip.kind.to_string()).or_default() += 1;
            if self.examples.len() < MAX_EXAMPLES {
                self.examples
                    .push(format!("{}:{}: {}", batch.member, skip.line, skip.message));
            }
        }
    }

    pub fn balanced(&self) -> bool {
        self.rows_read == self.rows_emitted + self.rows_skipped_malformed
    }

    /// Same accounting with the timing dropped, for comparisons.
    pub fn without_elapsed(&self) -> IngestStats {
        IngestStats {
            elapsed: Duration::ZERO,
            ..self.clone()
        }
    }
}

/// SHA-256 of a file's bytes, hex encoded.
pub fn fingerprint_file(path: &Path) -> std::io::Result<String> {
    let mut file = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}
