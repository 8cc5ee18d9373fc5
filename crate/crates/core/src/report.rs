//! Report bundle and its three output formats.
//!
//! Data files are byte-identical for identical inputs: every collection is
//! ordered, and the run timestamp and timing live only in
//! `metadata.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{CrossTab, Distribution, GeoRollup, format_tenths};
use crate::annotate::{AuditEntry, StaleSidecarKey};
use crate::filter::{Removal, StageCount, StaleEntry};
use crate::ingest::IngestStats;
use crate::regnum::RegistrationGrammar;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool_version: String,
    pub pipeline_name: String,
    pub pipeline_sha256: String,
    /// Input file name → SHA-256, for lexicons, lists and schema.
    pub input_sha256: BTreeMap<String, String>,
    pub dataset_fingerprint: String,
    pub timestamp: String,
    pub workers: usize,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Table {
    CrossTab(CrossTab),
    Distribution(Distribution),
}

impl Table {
    pub fn total(&self) -> u64 {
        match self {
            Table::CrossTab(t) => t.total,
            Table::Distribution(d) => d.denominator + d.unlabeled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapRegion {
    pub code: String,
    pub name: String,
    pub chinese_name: String,
    pub count: u64,
}

/// Regional rollup keyed by region code.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapData {
    pub regions: Vec<MapRegion>,
    pub national_class3_bucket: u64,
    pub undetermined: u64,
    pub total: u64,
}

impl MapData {
    pub fn from_rollup(g: &GeoRollup, grammar: &RegistrationGrammar) -> Self {
        let regions = g
            .regions
            .iter()
            .map(|(code, &count)| {
                let known = grammar.regions().iter().find(|r| &r.code == code);
                let (name, chinese_name) = match known {
                    Some(r) => (r.name.clone(), r.chinese_name.clone()),
                    None if code == "xu" => ("SAR (Xu)".to_string(), "许".to_string()),
                    None => (code.clone(), String::new()),
                };
                MapRegion {
                    code: code.clone(),
                    name,
                    chinese_name,
                    count,
                }
            })
            .collect();
        MapData {
            regions,
            national_class3_bucket: g.national_class3_bucket,
            undetermined: g.undetermined,
            total: g.total,
        }
    }
}

/// Software kind → device class → pathway.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Flow {
    pub source: String,
    pub middle: String,
    pub target: String,
    pub count: u64,
}

/// One AI candidate with its labels and the evidence that selected it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeviceRow {
    pub review_key: String,
    pub record_id: String,
    pub product_name: String,
    pub generic_name: String,
    pub software_kind: String,
    pub device_class: String,
    pub origin: String,
    pub technique: String,
    pub specialty: String,
    pub function: String,
    pub pathway: String,
    /// Survived the exclusion list.
    pub final_aimd: bool,
    pub evidence: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Audit {
    pub exclusions_removed: Vec<Removal>,
    pub exclusions_stale: Vec<StaleEntry>,
    pub overrides: Vec<AuditEntry>,
    pub overrides_rejected: Vec<AuditEntry>,
    pub sidecar_stale: Vec<StaleSidecarKey>,
}

/// Everything a run reports. `metadata` is stored apart from the data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    #[serde(skip)]
    pub metadata: RunMetadata,
    pub stage_counts: Vec<StageCount>,
    pub final_aimd: u64,
    pub ingest: IngestStats,
    pub tables: BTreeMap<String, Table>,
    pub map_data: MapData,
    pub alluvial_data: Vec<Flow>,
    pub devices: Vec<DeviceRow>,
    pub audit: Audit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Structured,
    Delimited,
    Human,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" | "structured" => Ok(Format::Structured),
            "csv" | "delimited" => Ok(Format::Delimited),
            "md" | "markdown" | "human" => Ok(Format::Human),
            _ => Err(format!("unknown report format {s:?} (json, csv, md)")),
        }
    }
}

pub const METADATA_FILE: &str = "metadata.json";
pub const BUNDLE_FILE: &str = "bundle.json";
pub const MARKDOWN_FILE: &str = "report.md";

fn write(path: PathBuf, bytes: &[u8]) -> Result<PathBuf, ReportError> {
    fs::write(&path, bytes).map_err(io_err(&path))?;
    Ok(path)
}

/// Writes `format` plus `metadata.json` into `out`; returns the files
/// written, metadata first.
pub fn emit(bundle: &ReportBundle, format: Format, out: &Path) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut files = vec![write(out.join(METADATA_FILE), &to_json(&bundle.metadata))?];
    match format {
        Format::Structured => files.push(write(out.join(BUNDLE_FILE), &to_json(bundle))?),
        Format::Delimited => files.extend(emit_delimited(bundle, out)?),
        Format::Human => files.push(write(out.join(MARKDOWN_FILE), render_markdown(bundle).as_bytes())?),
    }
    Ok(files)
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("report types serialize");
    s.push(b'\n');
    s
}

/// Reads a structured emission back.
pub fn load_structured(dir: &Path) -> Result<ReportBundle, ReportError> {
    let read = |name: &str| {
        let path = dir.join(name);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        Ok::<_, ReportError>((path, text))
    };
    let (path, text) = read(BUNDLE_FILE)?;
    let mut bundle: ReportBundle = serde_json::from_str(&text).map_err(|e| ReportError::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let (path, text) = read(METADATA_FILE)?;
    bundle.metadata = serde_json::from_str(&text).map_err(|e| ReportError::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    Ok(bundle)
}

fn csv_file<R: AsRef<[u8]>>(
    path: PathBuf,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<R>>,
) -> Result<PathBuf, ReportError> {
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(path)
}

fn emit_delimited(b: &ReportBundle, out: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let mut files = Vec::new();
    files.push(csv_file(
        out.join("stage_counts.csv"),
        &["stage", "records", "distinct_di"],
        b.stage_counts
            .iter()
            .map(|s| {
                vec![
                    s.stage.clone(),
                    s.records.to_string(),
                    s.distinct_di.map(|d| d.to_string()).unwrap_or_default(),
                ]
            })
            .chain(std::iter::once(vec![
                "final_aimd".into(),
                b.final_aimd.to_string(),
                String::new(),
            ])),
    )?);
    let tables = out.join("tables");
    fs::create_dir_all(&tables).map_err(io_err(&tables))?;
    for (name, t) in &b.tables {
        let path = tables.join(format!("{name}.csv"));
        files.push(match t {
            Table::CrossTab(x) => {
                let mut header: Vec<&str> = x.dims.iter().map(String::as_str).collect();
                header.push("count");
                csv_file(
                    path,
                    &header,
                    x.cells.iter().map(|c| {
                        let mut r = c.values.clone();
                        r.push(c.count.to_string());
                        r
                    }),
                )?
            }
            Table::Distribution(d) => csv_file(
                path,
                &[d.dimension.as_str(), "count", "percent", "denominator"],
                d.entries
                    .iter()
                    .map(|e| {
                        vec![
                            e.value.clone(),
                            e.count.to_string(),
                            e.percent(),
                            d.denominator.to_string(),
                        ]
                    })
                    .chain(std::iter::once(vec![
                        "(unlabeled)".into(),
                        d.unlabeled.to_string(),
                        String::new(),
                        String::new(),
                    ])),
            )?,
        });
    }
    files.push(csv_file(
        out.join("map_data.csv"),
        &["code", "name", "chinese_name", "count"],
        b.map_data
            .regions
            .iter()
            .map(|r| {
                vec![
                    r.code.clone(),
                    r.name.clone(),
                    r.chinese_name.clone(),
                    r.count.to_string(),
                ]
            })
            .chain([
                vec![
                    "national".into(),
                    "National (Class III)".into(),
                    "国".into(),
                    b.map_data.national_class3_bucket.to_string(),
                ],
                vec![
                    "undetermined".into(),
                    "Undetermined".into(),
                    String::new(),
                    b.map_data.undetermined.to_string(),
                ],
            ]),
    )?);
    files.push(csv_file(
        out.join("alluvial_data.csv"),
        &["source", "middle", "target", "count"],
        b.alluvial_data.iter().map(|f| {
            vec![
                f.source.clone(),
                f.middle.clone(),
                f.target.clone(),
                f.count.to_string(),
            ]
        }),
    )?);
    files.push(csv_file(
        out.join("devices.csv"),
        &[
            "review_key",
            "record_id",
            "product_name",
            "generic_name",
            "software_kind",
            "device_class",
            "origin",
            "technique",
            "specialty",
            "function",
            "pathway",
            "final_aimd",
            "evidence",
        ],
        b.devices.iter().map(|d| {
            vec![
                d.review_key.clone(),
                d.record_id.clone(),
                d.product_name.clone(),
                d.generic_name.clone(),
                d.software_kind.clone(),
                d.device_class.clone(),
                d.origin.clone(),
                d.technique.clone(),
                d.specialty.clone(),
                d.function.clone(),
                d.pathway.clone(),
                d.final_aimd.to_string(),
                d.evidence.clone(),
            ]
        }),
    )?);
    files.push(csv_file(
        out.join("audit_exclusions.csv"),
        &["key", "status", "reason", "record_ids"],
        b.audit
            .exclusions_removed
            .iter()
            .map(|r| {
                vec![
                    r.key.clone(),
                    "removed".into(),
                    r.reason.clone(),
                    r.record_ids.join(" "),
                ]
            })
            .chain(
                b.audit
                    .exclusions_stale
                    .iter()
                    .map(|s| vec![s.key.clone(), "stale".into(), s.reason.clone(), String::new()]),
            ),
    )?);
    files.push(csv_file(
        out.join("audit_overrides.csv"),
        &["status", "source", "key", "record_id", "field", "old", "new", "note"],
        b.audit
            .overrides
            .iter()
            .map(|a| ("applied", a))
            .chain(b.audit.overrides_rejected.iter().map(|a| ("rejected", a)))
            .map(|(status, a)| {
                vec![
                    status.to_string(),
                    a.source.clone(),
                    a.key.clone(),
                    a.record_id.clone(),
                    a.field.clone(),
                    a.old.clone(),
                    a.new.clone(),
                    a.note.clone(),
                ]
            })
            .chain(b.audit.sidecar_stale.iter().map(|s| {
                vec![
                    "stale".into(),
                    "sidecar".into(),
                    s.key.clone(),
                    String::new(),
                    s.field.clone(),
                    String::new(),
                    String::new(),
                    format!("line {}", s.line),
                ]
            })),
    )?);
    let ing = &b.ingest;
    files.push(csv_file(
        out.join("ingest.csv"),
        &["measure", "value"],
        [
            vec!["rows_read".to_string(), ing.rows_read.to_string()],
            vec!["rows_emitted".into(), ing.rows_emitted.to_string()],
            vec!["rows_skipped_malformed".into(), ing.rows_skipped_malformed.to_string()],
        ]
        .into_iter()
        .chain(
            ing.per_error_counts
                .iter()
                .map(|(k, v)| vec![format!("skipped:{k}"), v.to_string()]),
        ),
    )?);
    Ok(files)
}

fn md_escape(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

/// Markdown rendering of the bundle.
pub fn render_markdown(b: &ReportBundle) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Registry scan report\n");
    let _ = writeln!(
        s,
        "## Stage counts\n\n| stage | records | distinct DI |\n|---|---:|---:|"
    );
    for c in &b.stage_counts {
        let _ = writeln!(
            s,
            "| {} | {} | {} |",
            c.stage,
            c.records,
            c.distinct_di.map(|d| d.to_string()).unwrap_or_default()
        );
    }
    let _ = writeln!(s, "| final AIMD | {} | |\n", b.final_aimd);
    let _ = writeln!(
        s,
        "Rows read {}, emitted {}, skipped as malformed {}.\n",
        b.ingest.rows_read, b.ingest.rows_emitted, b.ingest.rows_skipped_malformed
    );
    for (name, t) in &b.tables {
        let _ = writeln!(s, "## {name}\n");
        match t {
            Table::Distribution(d) => {
                let _ = writeln!(s, "| {} | count | percent |\n|---|---:|---:|", d.dimension);
                for e in &d.entries {
                    let _ = writeln!(s, "| {} | {} | {}% |", md_escape(&e.value), e.count, e.percent());
                }
                let _ = writeln!(s, "\nDenominator {}; unlabeled {}.\n", d.denominator, d.unlabeled);
            }
            Table::CrossTab(x) => {
                let _ = writeln!(s, "| {} | count |", x.dims.join(" | "));
                let _ = writeln!(s, "|{}---:|", "---|".repeat(x.dims.len()));
                for c in &x.cells {
                    let vals: Vec<String> = c.values.iter().map(|v| md_escape(v)).collect();
                    let _ = writeln!(s, "| {} | {} |", vals.join(" | "), c.count);
                }
                let _ = writeln!(s, "\nTotal {}.\n", x.total);
            }
        }
    }
    let m = &b.map_data;
    let _ = writeln!(
        s,
        "## Regions (non-imported)\n\n| code | region | count | percent |\n|---|---|---:|---:|"
    );
    let pct = |n: u64| format_tenths(crate::analytics::percent_tenths(n, m.total));
    let _ = writeln!(
        s,
        "| national | National (Class III) | {} | {}% |",
        m.national_class3_bucket,
        pct(m.national_class3_bucket)
    );
    for r in &m.regions {
        let _ = writeln!(
            s,
            "| {} | {} {} | {} | {}% |",
            r.code,
            r.name,
            r.chinese_name,
            r.count,
            pct(r.count)
        );
    }
    let _ = writeln!(
        s,
        "| undetermined | | {} | {}% |\n\nTotal {}.\n",
        m.undetermined,
        pct(m.undetermined),
        m.total
    );
    let _ = writeln!(
        s,
        "## Flows (software kind, class, pathway)\n\n| source | middle | target | count |\n|---|---|---|---:|"
    );
    for f in &b.alluvial_data {
        let _ = writeln!(s, "| {} | {} | {} | {} |", f.source, f.middle, f.target, f.count);
    }
    let _ = writeln!(
        s,
        "\n## AI candidates\n\n| key | product | class | technique | specialty | function | pathway | final |\n|---|---|---|---|---|---|---|---|"
    );
    for d in &b.devices {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            md_escape(&d.review_key),
            md_escape(&d.product_name),
            d.device_class,
            d.technique,
            md_escape(&d.specialty),
            d.function,
            d.pathway,
            if d.final_aimd { "yes" } else { "no" }
        );
    }
    let a = &b.audit;
    let _ = writeln!(s, "\n## Audit\n");
    for r in &a.exclusions_removed {
        let _ = writeln!(
            s,
            "- excluded {} ({}): {}",
            md_escape(&r.key),
            r.record_ids.join(", "),
            md_escape(&r.reason)
        );
    }
    for st in &a.exclusions_stale {
        let _ = writeln!(s, "- stale exclusion {}: {}", md_escape(&st.key), md_escape(&st.reason));
    }
    for o in &a.overrides {
        let _ = writeln!(
            s,
            "- {} set {} of {} from {} to {} {}",
            o.source,
            o.field,
            o.record_id,
            o.old,
            o.new,
            md_escape(&o.note)
        );
    }
    for o in &a.overrides_rejected {
        let _ = writeln!(
            s,
            "- rejected {} override of {} for {} ({})",
            o.field,
            o.record_id,
            md_escape(&o.key),
            o.new
        );
    }
    for st in &a.sidecar_stale {
        let _ = writeln!(
            s,
            "- stale sidecar key {} ({}, line {})",
            md_escape(&st.key),
            st.field,
            st.line
        );
    }
    for e in &b.ingest.examples {
        let _ = writeln!(s, "- skipped row {}", md_escape(e));
    }
    s
}
