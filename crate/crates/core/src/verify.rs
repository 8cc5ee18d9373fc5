//! Checks a pipeline run against the naive per-record oracle and a
//! synthesized corpus's answer key.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Serialize;

use crate::filter::naive::NaiveOracle;
use crate::filter::{ExclusionList, RulePipeline, apply_exclusions};
use crate::ingest::{IngestOptions, IngestStats, SchemaMap, open_dataset};
use crate::scan::{ScanError, evaluate_dataset};
use crate::synth::AnswerKey;

const SAMPLE: usize = 10;

/// Expected vs actual membership of one answer-key label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelCheck {
    pub label: String,
    pub stage: Option<String>,
    pub expected: u64,
    pub actual: u64,
    /// A few record ids present in the key but not in the run, and the
    /// reverse.
    pub missing: Vec<String>,
    pub unexpected: Vec<String>,
}

impl LabelCheck {
    pub fn exact(&self) -> bool {
        self.expected == self.actual && self.missing.is_empty() && self.unexpected.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub stats: IngestStats,
    pub key_rows: u64,
    pub stage_counts: BTreeMap<String, u64>,
    /// Records where the compiled pipeline and the oracle disagree.
    pub oracle_mismatches: Vec<String>,
    pub oracle_mismatch_count: u64,
    /// Evidence items that fail an isolated re-check.
    pub provenance_failures: u64,
    pub invariant_violations: Vec<String>,
    pub labels: Vec<LabelCheck>,
}

impl VerifyReport {
    pub fn exact(&self) -> bool {
        self.key_rows == self.stats.rows_emitted
            && self.oracle_mismatch_count == 0
            && self.provenance_failures == 0
            && self.invariant_violations.is_empty()
            && self.labels.iter().all(LabelCheck::exact)
    }
}

fn diff(a: &BTreeSet<String>, b: &BTreeSet<String>) -> Vec<String> {
    a.difference(b).take(SAMPLE).cloned().collect()
}

/// Runs the production path once, re-evaluates every record with the
/// oracle, and compares both with `key`. Answer-key labels map to stages
/// through the spec's roles; `aimd_final` is the candidate stage minus
/// `exclusions`.
pub fn verify(
    path: &Path,
    schema: &SchemaMap,
    options: IngestOptions,
    pipeline: &RulePipeline,
    key: &AnswerKey,
    exclusions: &ExclusionList,
    workers: usize,
) -> Result<VerifyReport, ScanError> {
    let (outcome, stats) = evaluate_dataset(path, schema, options, pipeline, workers)?;
    let spec = pipeline.spec();
    let oracle = NaiveOracle::new(spec, pipeline.lexicon(), pipeline.grammar());

    let mut compiled: BTreeMap<&str, BTreeSet<String>> = BTreeMap::new();
    for s in &outcome.survivors {
        for stage in s.result.memberships.keys() {
            compiled
                .entry(stage.as_str())
                .or_default()
                .insert(s.result.record_id.clone());
        }
    }
    let by_id: BTreeMap<&str, &crate::filter::Survivor> = outcome
        .survivors
        .iter()
        .map(|s| (s.result.record_id.as_str(), s))
        .collect();

    let mut mismatches = Vec::new();
    let mut mismatch_count = 0u64;
    let mut provenance_failures = 0u64;
    let mut records = open_dataset(path, schema, options)?.records();
    for r in records.by_ref() {
        let r = r?;
        let naive = oracle.stages(&r);
        let got: BTreeSet<String> = match by_id.get(r.record_id()) {
            Some(s) => {
                for ev in s.result.memberships.values().flatten() {
                    if !oracle.recheck(&r, &s.result, ev) {
                        provenance_failures += 1;
                    }
                }
                s.result.memberships.keys().cloned().collect()
            }
            None => BTreeSet::new(),
        };
        if got != naive {
            mismatch_count += 1;
            if mismatches.len() < SAMPLE {
                mismatches.push(format!("{}: compiled {:?}, oracle {:?}", r.record_id(), got, naive));
            }
        }
    }

    let roles = &spec.roles;
    let stage_set = |stage: &Option<String>| -> BTreeSet<String> {
        stage
            .as_deref()
            .and_then(|s| compiled.get(s))
            .cloned()
            .unwrap_or_default()
    };
    let samd = stage_set(&roles.samd);
    let simd = stage_set(&roles.simd);
    let mdsw = stage_set(&roles.mdsw);
    let candidates = stage_set(&roles.ai_candidates);
    let cand_results = roles
        .ai_candidates
        .as_deref()
        .map(|s| outcome.members(s).map(|m| &*m.result).collect::<Vec<_>>())
        .unwrap_or_default();
    let excl = apply_exclusions(cand_results, exclusions);
    let finals: BTreeSet<String> = excl.kept.iter().map(|m| m.record_id.clone()).collect();

    let mut invariant_violations = Vec::new();
    if let Some(id) = samd.intersection(&simd).next() {
        invariant_violations.push(format!("{id} is in both samd and simd"));
    }
    if roles.mdsw.is_some()
        && let Some(id) = candidates.difference(&mdsw).next()
    {
        invariant_violations.push(format!("candidate {id} is outside mdsw"));
    }
    if let Some(id) = finals.difference(&candidates).next() {
        invariant_violations.push(format!("final {id} is not a candidate"));
    }

    let mut labels = Vec::new();
    for (label, stage, actual) in [
        ("samd", roles.samd.clone(), &samd),
        ("simd", roles.simd.clone(), &simd),
        ("mdsw", roles.mdsw.clone(), &mdsw),
        ("aimd_candidates", roles.ai_candidates.clone(), &candidates),
        ("aimd_final", roles.ai_candidates.clone(), &finals),
    ] {
        if stage.is_none() {
            continue;
        }
        let expected: BTreeSet<String> = key
            .rows
            .iter()
            .filter(|(_, l)| l.contains(label))
            .map(|(id, _)| id.clone())
            .collect();
        labels.push(LabelCheck {
            label: label.to_string(),
            stage,
            expected: expected.len() as u64,
            actual: actual.len() as u64,
            missing: diff(&expected, actual),
            unexpected: diff(actual, &expected),
        });
    }

    Ok(VerifyReport {
        stats: stats.without_elapsed(),
        key_rows: key.rows.len() as u64,
        stage_counts: outcome
            .stages
            .iter()
            .cloned()
            .zip(outcome.counts.iter().copied())
            .collect(),
        oracle_mismatches: mismatches,
        oracle_mismatch_count: mismatch_count,
        provenance_failures,
        invariant_violations,
        labels,
    })
}
