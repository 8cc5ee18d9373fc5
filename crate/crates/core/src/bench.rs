//! Throughput and memory measurement on a synthesized corpus.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::scan::{ScanError, ScanInputs, scan};
use crate::synth::{Recipe, SynthError, synthesize};

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rows: u64,
    pub workers: usize,
    pub synth_seconds: f64,
    pub scan_seconds: f64,
    pub rows_per_second: f64,
    /// Peak resident set size of this process, if the platform reports it.
    pub peak_rss_bytes: Option<u64>,
    pub final_aimd: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Scan(#[from] ScanError),
}

/// Default mix for throughput runs: mostly non-software rows.
pub fn bench_recipe(rows: u64, seed: u64) -> Recipe {
    Recipe::new(rows, 0.01, 0.04, 0.005, seed)
}

/// Peak RSS from `/proc/self/status` (`VmHWM`).
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// Writes the corpus to `archive` (reusing it when `reuse` is set and the
/// file exists), then times one scan.
pub fn run_bench(recipe: &Recipe, archive: &Path, inputs: &ScanInputs, reuse: bool) -> Result<BenchReport, BenchError> {
    let started = Instant::now();
    if !(reuse && archive.exists()) {
        synthesize(recipe, &inputs.schema, archive)?;
    }
    let synth_seconds = started.elapsed().as_secs_f64();
    let started = Instant::now();
    let result = scan(archive, inputs)?;
    let scan_seconds = started.elapsed().as_secs_f64();
    let rows = result.stats.rows_read;
    Ok(BenchReport {
        rows,
        workers: inputs.workers,
        synth_seconds,
        scan_seconds,
        rows_per_second: rows as f64 / scan_seconds.max(1e-9),
        peak_rss_bytes: peak_rss_bytes(),
        final_aimd: result.final_aimd(),
    })
}
