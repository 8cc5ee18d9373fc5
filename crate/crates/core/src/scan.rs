//! End-to-end run: ingest, evaluate, exclude, annotate, aggregate.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analytics::{BUNDLED_LABEL_GROUPS_TSV, Dimension, LabelGroups, crosstab_by, distribution, geo_rollup};
use crate::annotate::{
    AnnotateError, AnnotatedDevice, Annotator, BUNDLED_FUNCTION_TSV, BUNDLED_SIDECAR_TSV, BUNDLED_SPECIALTY_TSV,
    BUNDLED_TECHNIQUE_TSV, Lexicons, Sidecar, apply_sidecar,
};
use crate::filter::{
    BUNDLED_KEYWORDS_TSV, Evidence, ExclusionList, ExclusionOutcome, FilterError, PartialOutcome, PipelineOutcome,
    PipelineSpec, RulePipeline, TermLexicon, apply_exclusions,
};
use crate::ingest::{
    DEFAULT_SCHEMA_JSON, IngestError, IngestOptions, IngestStats, SchemaMap, fingerprint_file, open_dataset,
};
use crate::report::{Audit, DeviceRow, Flow, MapData, ReportBundle, RunMetadata, Table};

pub const BUNDLED_EXCLUSIONS_TSV: &str = include_str!("../../../assets/paper_default/exclusions.tsv");

#[derive(Debug, Error)]
pub enum ScanError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Annotate(#[from] AnnotateError),
    #[error("worker pool: {0}")]
    Pool(String),
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Everything a scan needs besides the dataset path.
#[derive(Debug, Clone)]
pub struct ScanInputs {
    pub pipeline: Arc<RulePipeline>,
    pub schema: SchemaMap,
    pub ingest: IngestOptions,
    pub exclusions: ExclusionList,
    pub sidecar: Sidecar,
    pub lexicons: Arc<Lexicons>,
    pub label_groups: LabelGroups,
    /// Input name → SHA-256 of its text, recorded in the run metadata.
    pub input_sha256: BTreeMap<String, String>,
    /// 0 means one per available core.
    pub workers: usize,
}

impl ScanInputs {
    /// The bundled configuration.
    pub fn bundled() -> Self {
        let spec = crate::filter::builtin_default_pipeline();
        let lexicon = TermLexicon::bundled();
        let pipeline = RulePipeline::compile(&spec, &lexicon).expect("bundled pipeline compiles");
        let input_sha256 = [
            ("keywords.tsv", BUNDLED_KEYWORDS_TSV),
            ("technique.tsv", BUNDLED_TECHNIQUE_TSV),
            ("specialty.tsv", BUNDLED_SPECIALTY_TSV),
            ("function.tsv", BUNDLED_FUNCTION_TSV),
            ("sidecar.tsv", BUNDLED_SIDECAR_TSV),
            ("exclusions.tsv", BUNDLED_EXCLUSIONS_TSV),
            ("label_groups.tsv", BUNDLED_LABEL_GROUPS_TSV),
            ("schema_2024.json", DEFAULT_SCHEMA_JSON),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), sha256_hex(v.as_bytes())))
        .collect();
        ScanInputs {
            pipeline: Arc::new(pipeline),
            schema: SchemaMap::default_2024(),
            ingest: IngestOptions::default(),
            exclusions: ExclusionList::from_tsv(BUNDLED_EXCLUSIONS_TSV).expect("bundled exclusions parse"),
            sidecar: Sidecar::from_tsv(BUNDLED_SIDECAR_TSV).expect("bundled sidecar parses"),
            lexicons: Arc::new(Lexicons::bundled()),
            label_groups: LabelGroups::bundled(),
            input_sha256,
            workers: 0,
        }
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, ScanError> {
    let n = if workers == 0 {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    } else {
        workers
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .thread_name(|i| format!("scan-worker-{i}"))
        .build()
        .map_err(|e| ScanError::Pool(e.to_string()))
}

/// Streams the archive through the pipeline on `workers` threads. The
/// result does not depend on the worker count.
pub fn evaluate_dataset(
    path: &Path,
    schema: &SchemaMap,
    options: IngestOptions,
    pipeline: &RulePipeline,
    workers: usize,
) -> Result<(PipelineOutcome, IngestStats), ScanError> {
    let started = Instant::now();
    let pool = pool(workers)?;
    let dataset = open_dataset(path, schema, options)?;
    let mut stats = IngestStats::default();
    let mut acc = PartialOutcome::default();
    for batch in dataset.batches() {
        let batch = batch?;
        let part = pool.install(|| {
            let mut bound = batch.bind_par();
            stats.absorb(&bound);
            pipeline.evaluate_chunk_par(std::mem::take(&mut bound.records))
        });
        acc = acc.merge(part);
    }
    stats.elapsed = started.elapsed();
    Ok((acc.finish(pipeline), stats))
}

/// Result of a full scan.
#[derive(Debug, Clone)]
pub struct ScanResult {
    pub outcome: PipelineOutcome,
    pub stats: IngestStats,
    pub exclusion: ExclusionOutcome,
    pub devices: Vec<AnnotatedDevice>,
    pub bundle: ReportBundle,
}

impl ScanResult {
    pub fn final_aimd(&self) -> u64 {
        self.bundle.final_aimd
    }
}

pub fn scan(path: &Path, inputs: &ScanInputs) -> Result<ScanResult, ScanError> {
    let started = Instant::now();
    let pipeline = &inputs.pipeline;
    let (outcome, stats) = evaluate_dataset(path, &inputs.schema, inputs.ingest, pipeline, inputs.workers)?;
    let roles = &pipeline.spec().roles;
    let candidates: Vec<_> = match &roles.ai_candidates {
        Some(stage) => outcome.members(stage).map(|s| &*s.result).collect(),
        None => Vec::new(),
    };
    let exclusion = apply_exclusions(candidates.iter().copied(), &inputs.exclusions);
    let removed: BTreeSet<String> = exclusion.removed.iter().map(|r| r.key.clone()).collect();

    let annotator = Annotator::new(inputs.lexicons.clone(), Arc::new(pipeline.grammar().clone()), roles);
    let (mut devices, mut rule_audit) = annotator.annotate_all(&outcome.survivors, &removed);
    let sidecar = apply_sidecar(&mut devices, &inputs.sidecar);
    rule_audit.extend(sidecar.audit);

    let mut bundle = build_bundle(&outcome, &stats, &exclusion, &devices, inputs);
    bundle.audit.overrides = rule_audit;
    bundle.audit.overrides_rejected = sidecar.rejected;
    bundle.audit.sidecar_stale = sidecar.stale;
    bundle.metadata = RunMetadata {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        pipeline_name: pipeline.spec().name.clone(),
        pipeline_sha256: sha256_hex(pipeline.spec().to_json().as_bytes()),
        input_sha256: inputs.input_sha256.clone(),
        dataset_fingerprint: fingerprint_file(path).map_err(|e| IngestError::Io {
            member: path.display().to_string(),
            line: 0,
            reason: e.to_string(),
        })?,
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        workers: inputs.workers,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(ScanResult {
        outcome,
        stats,
        exclusion,
        devices,
        bundle,
    })
}

fn evidence_text(result: &crate::filter::MatchResult, stage: &str) -> String {
    let mut parts: Vec<String> = result
        .memberships
        .get(stage)
        .into_iter()
        .flatten()
        .filter_map(|e| match e {
            Evidence::Keyword { field, surface, .. } => Some(format!("{field}:{surface}")),
            _ => None,
        })
        .collect();
    parts.sort();
    parts.dedup();
    parts.join("; ")
}

/// Data part of the bundle; metadata and override audit are filled in by
/// the caller.
pub fn build_bundle(
    outcome: &PipelineOutcome,
    stats: &IngestStats,
    exclusion: &ExclusionOutcome,
    devices: &[AnnotatedDevice],
    inputs: &ScanInputs,
) -> ReportBundle {
    let spec: &PipelineSpec = inputs.pipeline.spec();
    let groups = &inputs.label_groups;
    let none = LabelGroups::default();
    let finals: Vec<AnnotatedDevice> = devices.iter().filter(|d| d.ai_flag).cloned().collect();

    let mut tables = BTreeMap::new();
    let mut tab = |name: &str, t: Table| {
        tables.insert(name.to_string(), t);
    };
    use Dimension as D;
    tab(
        "mdsw_origin_kind_ai",
        Table::CrossTab(crosstab_by(devices, &[D::Origin, D::SoftwareKind, D::AiFlag], &none)),
    );
    tab(
        "mdsw_origin_class",
        Table::CrossTab(crosstab_by(devices, &[D::Origin, D::DeviceClass], &none)),
    );
    tab(
        "mdsw_device_class",
        Table::Distribution(distribution(devices, D::DeviceClass, &none)),
    );
    tab(
        "aimd_kind_class_pathway",
        Table::CrossTab(crosstab_by(
            &finals,
            &[D::SoftwareKind, D::DeviceClass, D::Pathway],
            &none,
        )),
    );
    for (name, dim) in [
        ("aimd_origin", D::Origin),
        ("aimd_software_kind", D::SoftwareKind),
        ("aimd_device_class", D::DeviceClass),
        ("aimd_technique", D::Technique),
        ("aimd_function_category", D::FunctionCategory),
        ("aimd_function_subtype", D::FunctionSubtype),
        ("aimd_pathway", D::Pathway),
    ] {
        tab(name, Table::Distribution(distribution(&finals, dim, &none)));
    }
    tab(
        "aimd_specialty",
        Table::Distribution(distribution(&finals, D::Specialty, groups)),
    );
    tab(
        "aimd_specialty_atomic",
        Table::Distribution(distribution(&finals, D::Specialty, &none)),
    );

    let grammar = inputs.pipeline.grammar();
    let map_data = MapData::from_rollup(&geo_rollup(devices, grammar), grammar);

    let mut flows: BTreeMap<(String, String, String), u64> = BTreeMap::new();
    for d in &finals {
        let key = (D::SoftwareKind.value(d), D::DeviceClass.value(d), D::Pathway.value(d));
        *flows.entry(key).or_default() += 1;
    }
    let alluvial_data = flows
        .into_iter()
        .map(|((source, middle, target), count)| Flow {
            source,
            middle,
            target,
            count,
        })
        .collect();

    let cand_stage = spec.roles.ai_candidates.clone().unwrap_or_default();
    let mut rows: Vec<DeviceRow> = devices
        .iter()
        .filter(|d| d.ai_candidate)
        .map(|d| DeviceRow {
            review_key: d.review_key().to_string(),
            record_id: d.record.record_id().to_string(),
            product_name: d.record.product_name().to_string(),
            generic_name: d.record.generic_name().to_string(),
            software_kind: d.software_kind.to_string(),
            device_class: D::DeviceClass.value(d),
            origin: d.origin.as_ref().map_or("Undetermined".to_string(), |o| o.to_string()),
            technique: d.technique.to_string(),
            specialty: d.specialty.clone(),
            function: d.function.to_string(),
            pathway: d.pathway.to_string(),
            final_aimd: d.ai_flag,
            evidence: evidence_text(&d.result, &cand_stage),
        })
        .collect();
    rows.sort();

    ReportBundle {
        metadata: RunMetadata::default(),
        stage_counts: outcome.stage_counts(spec.dedup_by_di),
        final_aimd: finals.len() as u64,
        ingest: stats.without_elapsed(),
        tables,
        map_data,
        alluvial_data,
        devices: rows,
        audit: Audit {
            exclusions_removed: exclusion.removed.clone(),
            exclusions_stale: exclusion.stale.clone(),
            ..Audit::default()
        },
    }
}
