//! Archive opening and the background row reader.

use std::collections::VecDeque;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::sync::mpsc::{Receiver, SyncSender, sync_channel};
use std::thread::JoinHandle;
use std::time::Instant;

use csv::StringRecord;
use rayon::prelude::*;
use zip::ZipArchive;

use super::decode::{EncodingPolicy, MemberEncoding, decoded};
use super::{IngestError, IngestOptions, IngestStats, SchemaMap};
use crate::record::{DeviceRecord, ExtraColumns, Field, RecordError};

/// One delimited member of the archive as seen at open time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberInfo {
    pub name: String,
    pub encoding: MemberEncoding,
    pub header: Vec<String>,
}

/// An opened archive whose headers have been checked against the schema.
#[derive(Debug)]
pub struct Dataset {
    path: PathBuf,
    delimiter: u8,
    batch_rows: usize,
    members: Vec<(usize, MemberInfo)>,
    binders: Vec<Arc<RowBinder>>,
}

fn is_delimited(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    !lower.starts_with("__macosx/") && [".csv", ".tsv", ".txt"].iter().any(|ext| lower.ends_with(ext))
}

fn open_archive(path: &Path) -> Result<ZipArchive<BufReader<File>>, IngestError> {
    let unreadable = |reason: String| IngestError::ArchiveUnreadable {
        path: path.display().to_string(),
        reason,
    };
    let file = File::open(path).map_err(|e| unreadable(e.to_string()))?;
    ZipArchive::new(BufReader::with_capacity(1 << 16, file)).map_err(|e| unreadable(e.to_string()))
}

fn csv_reader<R: std::io::Read>(delimiter: u8, rdr: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .buffer_capacity(1 << 18)
        .from_reader(rdr)
}

fn csv_error(member: &str, fallback_line: u64, err: csv::Error) -> IngestError {
    let line = err.position().map(|p| p.line()).unwrap_or(fallback_line);
    let member = member.to_string();
    match err.into_kind() {
        csv::ErrorKind::Utf8 { err, .. } => IngestError::EncodingError {
            member,
            line,
            reason: err.to_string(),
        },
        csv::ErrorKind::Io(e) if e.kind() == std::io::ErrorKind::InvalidData => IngestError::EncodingError {
            member,
            line,
            reason: e.to_string(),
        },
        other => IngestError::Io {
            member,
            line,
            reason: format!("{other:?}"),
        },
    }
}

/// Opens `path`, reads each member's header and checks the required
/// bindings. No data rows are read yet.
pub fn open_dataset(path: &Path, schema: &SchemaMap, options: IngestOptions) -> Result<Dataset, IngestError> {
    let mut zip = open_archive(path)?;
    let delimiter = schema.delimiter().unwrap_or(options.delimiter);
    let mut named: Vec<(String, usize)> = Vec::new();
    for i in 0..zip.len() {
        let entry = zip.by_index_raw(i).map_err(|e| IngestError::ArchiveUnreadable {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        let name = entry.name().map_err(|e| IngestError::ArchiveUnreadable {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        if !entry.is_dir() && is_delimited(&name) {
            named.push((name.into_owned(), i));
        }
    }
    if named.is_empty() {
        return Err(IngestError::ArchiveUnreadable {
            path: path.display().to_string(),
            reason: "no delimited text member".into(),
        });
    }
    named.sort();

    let mut members = Vec::with_capacity(named.len());
    let mut binders = Vec::with_capacity(named.len());
    for (name, index) in named {
        let entry = zip.by_index(index).map_err(|e| IngestError::ArchiveUnreadable {
            path: path.display().to_string(),
            reason: format!("{name}: {e}"),
        })?;
        let (encoding, rdr) = decoded(entry, options.encoding).map_err(|e| IngestError::Io {
            member: name.clone(),
            line: 0,
            reason: e.to_string(),
        })?;
        let mut rdr = csv_reader(delimiter, rdr);
        let mut rec = StringRecord::new();
        let has_header = rdr.read_record(&mut rec).map_err(|e| csv_error(&name, 1, e))?;
        let header: Vec<String> = if has_header {
            rec.iter().map(|h| h.trim().to_string()).collect()
        } else {
            Vec::new()
        };
        let missing = schema.missing_in(&header);
        if !missing.is_empty() {
            return Err(IngestError::HeaderMismatch { member: name, missing });
        }
        binders.push(Arc::new(RowBinder::new(&header, schema)));
        members.push((index, MemberInfo { name, encoding, header }));
    }
    Ok(Dataset {
        path: path.to_path_buf(),
        delimiter,
        batch_rows: options.batch_rows.max(1),
        members,
        binders,
    })
}

impl Dataset {
    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn members(&self) -> impl Iterator<Item = &MemberInfo> {
        self.members.iter().map(|(_, m)| m)
    }

    /// Starts the reader thread. Batches arrive in file order.
    pub fn batches(self) -> RowBatches {
        let (tx, rx) = sync_channel(4);
        let handle = std::thread::Builder::new()
            .name("ingest-reader".into())
            .spawn(move || {
                if let Err(e) = self.produce(&tx) {
                    let _ = tx.send(Err(e));
                }
            })
            .expect("spawn reader thread");
        RowBatches {
            rx: Some(rx),
            handle: Some(handle),
        }
    }

    /// Record-at-a-time view with running stats.
    pub fn records(self) -> Records {
        Records {
            started: Instant::now(),
            batches: self.batches(),
            pending: VecDeque::new(),
            stats: IngestStats::default(),
        }
    }

    fn produce(&self, tx: &SyncSender<Result<RowBatch, IngestError>>) -> Result<(), IngestError> {
        let mut zip = open_archive(&self.path)?;
        for ((index, info), binder) in self.members.iter().zip(&self.binders) {
            let member: Arc<str> = Arc::from(info.name.as_str());
            let entry = zip.by_index(*index).map_err(|e| IngestError::ArchiveUnreadable {
                path: self.path.display().to_string(),
                reason: format!("{member}: {e}"),
            })?;
            let policy = match info.encoding {
                MemberEncoding::Utf8 => EncodingPolicy::Utf8,
                MemberEncoding::Gbk => EncodingPolicy::Gbk,
            };
            let (_, rdr) = decoded(entry, policy).map_err(|e| IngestError::Io {
                member: member.to_string(),
                line: 0,
                reason: e.to_string(),
            })?;
            let mut rdr = csv_reader(self.delimiter, rdr);
            let mut header = StringRecord::new();
            rdr.read_record(&mut header).map_err(|e| csv_error(&member, 1, e))?;

            let mut rows = Vec::with_capacity(self.batch_rows);
            loop {
                let mut rec = StringRecord::new();
                let more = rdr
                    .read_record(&mut rec)
                    .map_err(|e| csv_error(&member, rdr.position().line(), e))?;
                if more {
                    rows.push(rec);
                }
                if rows.len() == self.batch_rows || (!more && !rows.is_empty()) {
                    let batch = RowBatch {
                        member: member.clone(),
                        binder: binder.clone(),
                        rows: std::mem::take(&mut rows),
                    };
                    if tx.send(Ok(batch)).is_err() {
                        return Ok(());
                    }
                    rows.reserve(self.batch_rows);
                }
                if !more {
                    break;
                }
            }
        }
        Ok(())
    }
}

/// Maps header positions to record fields for one member.
#[derive(Debug)]
pub(crate) struct RowBinder {
    width: usize,
    targets: Vec<Option<Field>>,
    extra_names: Arc<[Arc<str>]>,
}

impl RowBinder {
    fn new(header: &[String], schema: &SchemaMap) -> Self {
        let mut targets = Vec::with_capacity(header.len());
        let mut bound = Vec::new();
        let mut extra = Vec::new();
        for h in header {
            let field = schema
                .bindings()
                .iter()
                .find(|(f, col)| *col == h && !bound.contains(*f))
                .map(|(f, _)| *f);
            match field {
                Some(f) => bound.push(f),
                None => extra.push(Arc::<str>::from(h.as_str())),
            }
            targets.push(field);
        }
        RowBinder {
            width: header.len(),
            targets,
            extra_names: extra.into(),
        }
    }

    fn bind(&self, row: &StringRecord) -> Result<DeviceRecord, Skip> {
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != self.width {
            return Err(Skip {
                line,
                kind: "field_count",
                message: format!("expected {} fields, found {}", self.width, row.len()),
            });
        }
        let mut builder = DeviceRecord::builder(String::new());
        let mut extra = ExtraColumns::with_capacity(self.extra_names.clone(), row.as_slice().len());
        for (value, target) in row.iter().zip(&self.targets) {
            match target {
                Some(f) => builder = builder.field(*f, value),
                None => extra.push(value),
            }
        }
        builder.extra(extra).build().map_err(|e| Skip {
            line,
            kind: match e {
                RecordError::EmptyRecordId => "empty_record_id",
                _ => "invalid_record",
            },
            message: e.to_string(),
        })
    }
}

/// A skipped row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skip {
    pub line: u64,
    pub kind: &'static str,
    pub message: String,
}

/// Raw rows from one member, not yet bound.
#[derive(Debug)]
pub struct RowBatch {
    pub member: Arc<str>,
    binder: Arc<RowBinder>,
    rows: Vec<StringRecord>,
}

/// A batch after binding: records in row order plus skipped rows.
#[derive(Debug, Default)]
pub struct BoundBatch {
    pub member: Arc<str>,
    pub rows_read: u64,
    pub records: Vec<DeviceRecord>,
    pub skipped: Vec<Skip>,
}

impl RowBatch {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn bind(self) -> BoundBatch {
        let binder = &self.binder;
        self.split(self.rows.iter().map(|r| binder.bind(r)).collect())
    }

    /// Binds on the current rayon pool; output order matches `bind`.
    pub fn bind_par(self) -> BoundBatch {
        let binder = &self.binder;
        let bound = self.rows.par_iter().with_min_len(256).map(|r| binder.bind(r)).collect();
        self.split(bound)
    }

    fn split(&self, bound: Vec<Result<DeviceRecord, Skip>>) -> BoundBatch {
        let mut out = BoundBatch {
            member: self.member.clone(),
            rows_read: bound.len() as u64,
            records: Vec::with_capacity(bound.len()),
            skipped: Vec::new(),
        };
        for r in bound {
            match r {
                Ok(rec) => out.records.push(rec),
                Err(skip) => out.skipped.push(skip),
            }
        }
        out
    }
}

/// Row batches in file order; the first error ends the stream.
pub struct RowBatches {
    rx: Option<Receiver<Result<RowBatch, IngestError>>>,
    handle: Option<JoinHandle<()>>,
}

impl Iterator for RowBatches {
    type Item = Result<RowBatch, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        let item = self.rx.as_ref()?.recv().ok();
        if matches!(item, None | Some(Err(_))) {
            self.shutdown();
        }
        item
    }
}

impl RowBatches {
    fn shutdown(&mut self) {
        self.rx = None;
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for RowBatches {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Records in file order. Malformed rows are skipped and tallied in
/// [`Records::stats`].
pub struct Records {
    started: Instant,
    batches: RowBatches,
    pending: VecDeque<DeviceRecord>,
    stats: IngestStats,
}

impl Records {
    pub fn stats(&self) -> IngestStats {
        IngestStats {
            elapsed: self.started.elapsed(),
            ..self.stats.clone()
        }
    }
}

impl Iterator for Records {
    type Item = Result<DeviceRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(r) = self.pending.pop_front() {
                return Some(Ok(r));
            }
            match self.batches.next()? {
                Ok(batch) => {
                    let bound = batch.bind();
                    self.stats.absorb(&bound);
                    self.pending.extend(bound.records);
                }
                Err(e) => return Some(Err(e)),
            }
        }
    }
}
