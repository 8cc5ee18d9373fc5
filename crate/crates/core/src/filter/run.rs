//! Running a compiled pipeline over a record stream.

use std::collections::BTreeSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{MatchResult, RulePipeline};
use crate::record::DeviceRecord;

/// A record that belongs to at least one stage. Shared so annotation can
/// hold it without copying.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Survivor {
    pub result: Arc<MatchResult>,
    pub record: Arc<DeviceRecord>,
}

/// Counts and survivors for a slice of the stream. Merging is associative
/// and commutative once [`PartialOutcome::finish`] sorts the survivors.
#[derive(Debug, Clone, Default)]
pub struct PartialOutcome {
    counts: Vec<u64>,
    evaluated: u64,
    survivors: Vec<Survivor>,
}

impl PartialOutcome {
    fn empty(stages: usize) -> Self {
        PartialOutcome {
            counts: vec![0; stages],
            evaluated: 0,
            survivors: Vec::new(),
        }
    }

    fn add(&mut self, pipeline: &RulePipeline, record: DeviceRecord) {
        self.evaluated += 1;
        let member = pipeline.memberships(&record);
        if !member.iter().any(|&m| m) {
            return;
        }
        for (c, m) in self.counts.iter_mut().zip(&member) {
            *c += u64::from(*m);
        }
        let result = pipeline.evaluate(&record).expect("member of some stage");
        self.survivors.push(Survivor {
            result: Arc::new(result),
            record: Arc::new(record),
        });
    }

    pub fn merge(mut self, other: PartialOutcome) -> PartialOutcome {
        if self.counts.is_empty() {
            return other;
        }
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.evaluated += other.evaluated;
        self.survivors.extend(other.survivors);
        self
    }

    pub fn finish(self, pipeline: &RulePipeline) -> PipelineOutcome {
        let mut survivors = self.survivors;
        survivors.sort_unstable();
        let counts = if self.counts.is_empty() {
            vec![0; pipeline.stage_count()]
        } else {
            self.counts
        };
        PipelineOutcome {
            stages: pipeline.stage_names().map(str::to_string).collect(),
            counts,
            records_evaluated: self.evaluated,
            survivors,
        }
    }
}

/// Per-stage counts plus every surviving record, sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineOutcome {
    /// Spec order.
    pub stages: Vec<String>,
    pub counts: Vec<u64>,
    pub records_evaluated: u64,
    pub survivors: Vec<Survivor>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCount {
    pub stage: String,
    pub records: u64,
    /// Distinct record ids; present only when DI deduplication is requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distinct_di: Option<u64>,
}

impl PipelineOutcome {
    pub fn count(&self, stage: &str) -> Option<u64> {
        self.stages.iter().position(|s| s == stage).map(|i| self.counts[i])
    }

    pub fn members<'a>(&'a self, stage: &'a str) -> impl Iterator<Item = &'a Survivor> + 'a {
        self.survivors.iter().filter(move |s| s.result.in_stage(stage))
    }

    /// Stage counts in spec order; with `dedup_by_di` each also carries the
    /// number of distinct record ids.
    pub fn stage_counts(&self, dedup_by_di: bool) -> Vec<StageCount> {
        self.stages
            .iter()
            .zip(&self.counts)
            .map(|(stage, &records)| StageCount {
                stage: stage.clone(),
                records,
                distinct_di: dedup_by_di.then(|| {
                    self.members(stage)
                        .map(|s| s.result.record_id.as_str())
                        .collect::<BTreeSet<_>>()
                        .len() as u64
                }),
            })
            .collect()
    }
}

impl RulePipeline {
    pub fn evaluate_chunk(&self, records: impl IntoIterator<Item = DeviceRecord>) -> PartialOutcome {
        let mut out = PartialOutcome::empty(self.stage_count());
        for r in records {
            out.add(self, r);
        }
        out
    }

    /// Evaluates on the current rayon pool.
    pub fn evaluate_chunk_par(&self, records: Vec<DeviceRecord>) -> PartialOutcome {
        const GRAIN: usize = 1024;
        if records.len() <= GRAIN || rayon::current_num_threads() == 1 {
            return self.evaluate_chunk(records);
        }
        records
            .into_par_iter()
            .with_min_len(GRAIN)
            .fold(
                || PartialOutcome::empty(self.stage_count()),
                |mut acc, r| {
                    acc.add(self, r);
                    acc
                },
            )
            .reduce(|| PartialOutcome::empty(self.stage_count()), PartialOutcome::merge)
    }
}

/// Single pass over `records`; the first stream error aborts the run.
pub fn run_pipeline<E>(
    pipeline: &RulePipeline,
    records: impl IntoIterator<Item = Result<DeviceRecord, E>>,
) -> Result<PipelineOutcome, E> {
    let mut acc = PartialOutcome::empty(pipeline.stage_count());
    for r in records {
        acc.add(pipeline, r?);
    }
    Ok(acc.finish(pipeline))
}
