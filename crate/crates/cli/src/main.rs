//! `mdscan`: registry scan, corpus synthesis, verification and benchmarks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result, bail};
use clap::{Parser, Subcommand};

use mdscan_core::analytics::LabelGroups;
use mdscan_core::annotate::{Lexicons, Sidecar};
use mdscan_core::bench::{bench_recipe, run_bench};
use mdscan_core::filter::{
    ExclusionList, FilterError, PipelineSpec, RulePipeline, TermLexicon, builtin_default_pipeline,
};
use mdscan_core::ingest::{EncodingPolicy, IngestError, IngestOptions, SchemaMap};
use mdscan_core::regnum::{default_grammar, parse_registration_number};
use mdscan_core::report::{Format, emit};
use mdscan_core::scan::{ScanError, ScanInputs, scan, sha256_hex};
use mdscan_core::synth::{AnswerKey, Recipe, synthesize};
use mdscan_core::udi::parse_udi;
use mdscan_core::verify::verify;

const EXIT_SPEC: u8 = 3;
const EXIT_ARCHIVE: u8 = 4;
const EXIT_HEADER: u8 = 5;
const EXIT_ENCODING: u8 = 6;
const EXIT_PARSE: u8 = 7;
const EXIT_MISMATCH: u8 = 8;

/// Failure with a fixed exit code.
#[derive(Debug)]
struct Exit(u8, String);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Exit {}

#[derive(Parser)]
#[command(
    version,
    about = "Screen medical-device registry dumps for software and AI-enabled devices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct ConfigArgs {
    /// `paper_default` or a pipeline spec JSON file.
    #[arg(long, default_value = "paper_default")]
    pipeline: String,
    /// Keyword surface-form lexicon (term, surface TSV).
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Exclusion list (key, reason TSV).
    #[arg(long)]
    exclusions: Option<PathBuf>,
    /// Manual annotation overrides (key, field, value, note TSV).
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Column-binding schema JSON.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Directory with technique.tsv, specialty.tsv, function.tsv and
    /// label_groups.tsv; unset files fall back to the bundled ones.
    #[arg(long, env = "MDSCAN_ASSETS")]
    assets: Option<PathBuf>,
    /// utf8, gbk or auto.
    #[arg(long, default_value = "auto")]
    encoding: String,
    /// Field delimiter of the archive members.
    #[arg(long)]
    delimiter: Option<char>,
    /// Worker threads; 0 uses every available core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Full run: ingest, filter, annotate and write the report bundle.
    Scan {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Output formats: json, csv, md (comma separated).
        #[arg(long, value_delimiter = ',', default_value = "json,csv,md")]
        format: Vec<String>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// UDI utilities.
    Udi {
        #[command(subcommand)]
        command: ParseCommand,
    },
    /// Registration-number utilities.
    Regnum {
        #[command(subcommand)]
        command: ParseCommand,
    },
    /// Generate a synthetic archive with an answer key.
    Synth {
        #[arg(long)]
        recipe: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Compare a run against the naive oracle and an answer key.
    Verify {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        answer_key: PathBuf,
        /// Write the full report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Synthesize a corpus and time a full scan of it.
    Bench {
        #[arg(long, default_value_t = 1_000_000)]
        rows: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Where to keep the corpus; a temporary directory by default.
        #[arg(long)]
        archive: Option<PathBuf>,
        /// Reuse `--archive` when it already exists.
        #[arg(long)]
        reuse: bool,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
}

#[derive(Subcommand)]
enum ParseCommand {
    Parse { code: String },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Exit(EXIT_SPEC, format!("reading {}: {e}", path.display())).into())
}

fn spec_err(what: &str, path: &Path, e: impl std::fmt::Display) -> anyhow::Error {
    Exit(EXIT_SPEC, format!("{what} {}: {e}", path.display())).into()
}

fn load_schema(path: Option<&Path>) -> Result<SchemaMap> {
    match path {
        None => Ok(SchemaMap::default_2024()),
        Some(p) => SchemaMap::from_json(&read(p)?).map_err(|e| spec_err("schema", p, e)),
    }
}

impl ConfigArgs {
    fn asset(&self, name: &str) -> Option<PathBuf> {
        self.assets.as_ref().map(|d| d.join(name)).filter(|p| p.exists())
    }

    fn inputs(&self) -> Result<ScanInputs> {
        let mut inputs = ScanInputs::bundled();
        let mut hash = |name: &str, text: &str| {
            inputs
                .input_sha256
                .insert(name.to_string(), sha256_hex(text.as_bytes()));
        };

        let spec = if self.pipeline == "paper_default" {
            builtin_default_pipeline()
        } else {
            let p = Path::new(&self.pipeline);
            let text = read(p)?;
            hash("pipeline.json", &text);
            PipelineSpec::from_json(&text).map_err(|e| spec_err("pipeline", p, e))?
        };
        let lexicon = match &self.lexicon {
            None => TermLexicon::bundled(),
            Some(p) => {
                let text = read(p)?;
                hash("keywords.tsv", &text);
                TermLexicon::from_tsv(&text).map_err(|e| spec_err("lexicon", p, e))?
            }
        };
        let exclusions = match &self.exclusions {
            None => None,
            Some(p) => {
                let text = read(p)?;
                hash("exclusions.tsv", &text);
                Some(ExclusionList::from_tsv(&text).map_err(|e| spec_err("exclusions", p, e))?)
            }
        };
        let sidecar = match &self.sidecar {
            None => None,
            Some(p) => {
                let text = read(p)?;
                hash("sidecar.tsv", &text);
                Some(Sidecar::from_tsv(&text).map_err(|e| spec_err("sidecar", p, e))?)
            }
        };
        let schema = match &self.schema {
            None => None,
            Some(p) => {
                hash("schema_2024.json", &read(p)?);
                Some(load_schema(Some(p))?)
            }
        };
        let mut lexicon_texts = Vec::new();
        for name in ["technique.tsv", "specialty.tsv", "function.tsv"] {
            lexicon_texts.push(match self.asset(name) {
                Some(p) => {
                    let text = read(&p)?;
                    hash(name, &text);
                    text
                }
                None => match name {
                    "technique.tsv" => mdscan_core::annotate::BUNDLED_TECHNIQUE_TSV.to_string(),
                    "specialty.tsv" => mdscan_core::annotate::BUNDLED_SPECIALTY_TSV.to_string(),
                    _ => mdscan_core::annotate::BUNDLED_FUNCTION_TSV.to_string(),
                },
            });
        }
        let groups = match self.asset("label_groups.tsv") {
            None => None,
            Some(p) => {
                let text = read(&p)?;
                hash("label_groups.tsv", &text);
                Some(LabelGroups::from_tsv(&text).map_err(|e| spec_err("label groups", &p, e))?)
            }
        };

        inputs.pipeline = Arc::new(RulePipeline::compile(&spec, &lexicon).map_err(|e| Exit(EXIT_SPEC, e.to_string()))?);
        inputs.lexicons = Arc::new(
            Lexicons::from_texts(&lexicon_texts[0], &lexicon_texts[1], &lexicon_texts[2])
                .map_err(|e| Exit(EXIT_SPEC, e.to_string()))?,
        );
        if let Some(e) = exclusions {
            inputs.exclusions = e;
        }
        if let Some(s) = sidecar {
            inputs.sidecar = s;
        }
        if let Some(s) = schema {
            inputs.schema = s;
        }
        if let Some(g) = groups {
            inputs.label_groups = g;
        }
        inputs.ingest = self.ingest_options(&inputs.schema)?;
        inputs.workers = self.workers;
        Ok(inputs)
    }

    fn ingest_options(&self, schema: &SchemaMap) -> Result<IngestOptions> {
        let encoding: EncodingPolicy = self
            .encoding
            .parse()
            .map_err(|e| Exit(EXIT_SPEC, format!("--encoding: {e}")))?;
        let mut options = IngestOptions {
            encoding,
            ..IngestOptions::default()
        };
        if let Some(d) = schema.delimiter() {
            options.delimiter = d;
        }
        if let Some(c) = self.delimiter {
            if !c.is_ascii() {
                bail!(Exit(EXIT_SPEC, format!("--delimiter {c:?} is not ASCII")));
            }
            options.delimiter = c as u8;
        }
        Ok(options)
    }
}

fn cmd_scan(dataset: &Path, out: &Path, formats: &[String], config: &ConfigArgs) -> Result<()> {
    let formats: Vec<Format> = formats
        .iter()
        .map(|f| {
            f.parse()
                .map_err(|e| anyhow::Error::from(Exit(EXIT_SPEC, format!("--format: {e}"))))
        })
        .collect::<Result<_>>()?;
    let inputs = config.inputs()?;
    let result = scan(dataset, &inputs)?;
    let stats = &result.stats;
    println!(
        "rows read={} emitted={} skipped={}",
        stats.rows_read, stats.rows_emitted, stats.rows_skipped_malformed
    );
    for example in &stats.examples {
        eprintln!("skipped {example}");
    }
    let counts: Vec<String> = result
        .bundle
        .stage_counts
        .iter()
        .map(|c| match c.distinct_di {
            Some(d) => format!("{}={} (distinct {d})", c.stage, c.records),
            None => format!("{}={}", c.stage, c.records),
        })
        .collect();
    println!("{}", counts.join(" "));
    println!("final_aimd={}", result.final_aimd());
    let audit = &result.bundle.audit;
    if !audit.exclusions_stale.is_empty() || !audit.sidecar_stale.is_empty() {
        eprintln!(
            "warning: {} stale exclusion(s), {} stale sidecar entr(ies); see the audit tables",
            audit.exclusions_stale.len(),
            audit.sidecar_stale.len()
        );
    }
    for format in formats {
        emit(&result.bundle, format, out).with_context(|| format!("writing {}", out.display()))?;
    }
    println!("report written to {}", out.display());
    Ok(())
}

fn cmd_udi(code: &str) -> Result<()> {
    let udi = parse_udi(code).map_err(|e| Exit(EXIT_PARSE, format!("{code:?}: {e}")))?;
    println!("agency: {}", udi.di.agency);
    println!("di: {}", udi.di.canonical);
    println!("di_part1: {}", udi.di.part1);
    println!("di_part2: {}", udi.di.part2);
    if udi.di.agency == mdscan_core::udi::Agency::Gs1 {
        println!("check_digit: valid");
    }
    if let Some(d) = udi.pi.production_date {
        println!("production_date: {}", d.date);
    }
    if let Some(d) = udi.pi.expiry_date {
        println!("expiry_date: {}", d.date);
    }
    if let Some(lot) = &udi.pi.lot {
        println!("lot: {lot}");
    }
    if let Some(serial) = &udi.pi.serial {
        println!("serial: {serial}");
    }
    println!("canonical: {}", udi.to_element_string());
    Ok(())
}

fn cmd_regnum(number: &str) -> Result<()> {
    let r = parse_registration_number(number).map_err(|e| Exit(EXIT_PARSE, e.to_string()))?;
    println!("origin: {}", r.origin);
    println!("class: {}", r.device_class.as_str());
    println!("category: {}", r.category);
    println!("year: {}", r.year);
    println!("serial: {}", r.serial);
    if let Some(code) = default_grammar().region_code(&r.origin) {
        println!("region_code: {code}");
    }
    Ok(())
}

fn cmd_synth(recipe: &Path, out: &Path, schema: Option<&Path>) -> Result<()> {
    let recipe = Recipe::from_json(&read(recipe)?).map_err(|e| spec_err("recipe", recipe, e))?;
    let output = synthesize(&recipe, &load_schema(schema)?, out)?;
    let c = output.counts;
    println!(
        "rows={} samd={} simd={} mdsw={} aimd_candidates={} aimd_final={}",
        c.rows, c.samd, c.simd, c.mdsw, c.aimd_candidates, c.aimd_final
    );
    println!("archive: {}", output.archive.display());
    println!("answer key: {}", output.answer_key.display());
    println!("exclusions: {}", output.exclusions.display());
    Ok(())
}

fn cmd_verify(dataset: &Path, answer_key: &Path, report_path: Option<&Path>, config: &ConfigArgs) -> Result<()> {
    let inputs = config.inputs()?;
    let key = AnswerKey::read(answer_key).with_context(|| format!("answer key {}", answer_key.display()))?;
    let report = verify(
        dataset,
        &inputs.schema,
        inputs.ingest,
        &inputs.pipeline,
        &key,
        &inputs.exclusions,
        config.workers,
    )?;
    for label in &report.labels {
        println!(
            "{}: expected={} actual={} {}",
            label.label,
            label.expected,
            label.actual,
            if label.exact() { "ok" } else { "MISMATCH" }
        );
    }
    println!("oracle discrepancies: {}", report.oracle_mismatch_count);
    for m in &report.oracle_mismatches {
        println!("  {m}");
    }
    println!("provenance failures: {}", report.provenance_failures);
    for v in &report.invariant_violations {
        println!("invariant violated: {v}");
    }
    if let Some(p) = report_path {
        std::fs::write(p, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", p.display()))?;
    }
    if report.exact() {
        println!("verdict: exact");
        Ok(())
    } else {
        bail!(Exit(EXIT_MISMATCH, "verdict: mismatch".into()))
    }
}

fn cmd_bench(rows: u64, seed: u64, archive: Option<PathBuf>, reuse: bool, workers: usize) -> Result<()> {
    let tmp;
    let archive = match archive {
        Some(a) => a,
        None => {
            tmp = std::env::temp_dir().join(format!("mdscan-bench-{}", std::process::id()));
            std::fs::create_dir_all(&tmp)?;
            tmp.join("bench.zip")
        }
    };
    let mut inputs = ScanInputs::bundled();
    inputs.workers = workers;
    let report = run_bench(&bench_recipe(rows, seed), &archive, &inputs, reuse);
    if !reuse
        && archive.file_name().is_some_and(|n| n == "bench.zip")
        && let Some(dir) = archive.parent().filter(|d| d.starts_with(std::env::temp_dir()))
    {
        let _ = std::fs::remove_dir_all(dir);
    }
    let report = report?;
    println!("rows: {}", report.rows);
    println!("synth_seconds: {:.2}", report.synth_seconds);
    println!("scan_seconds: {:.2}", report.scan_seconds);
    println!("rows_per_second: {:.0}", report.rows_per_second);
    match report.peak_rss_bytes {
        Some(b) => println!("peak_rss_mib: {:.1}", b as f64 / (1024.0 * 1024.0)),
        None => println!("peak_rss_mib: unavailable"),
    }
    println!("final_aimd: {}", report.final_aimd);
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(Exit(code, _)) = cause.downcast_ref::<Exit>() {
            return *code;
        }
        let ingest = cause
            .downcast_ref::<IngestError>()
            .or_else(|| match cause.downcast_ref::<ScanError>() {
                Some(ScanError::Ingest(e)) => Some(e),
                _ => None,
            });
        if let Some(e) = ingest {
            return match e {
                IngestError::ArchiveUnreadable { .. } => EXIT_ARCHIVE,
                IngestError::HeaderMismatch { .. } => EXIT_HEADER,
                IngestError::EncodingError { .. } => EXIT_ENCODING,
                IngestError::Schema(_) => EXIT_SPEC,
                IngestError::Io { .. } => 1,
            };
        }
        if cause.downcast_ref::<FilterError>().is_some()
            || matches!(
                cause.downcast_ref::<ScanError>(),
                Some(ScanError::Filter(_) | ScanError::Annotate(_))
            )
        {
            return EXIT_SPEC;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Scan {
            dataset,
            out,
            format,
            config,
        } => cmd_scan(&dataset, &out, &format, &config),
        Command::Udi {
            command: ParseCommand::Parse { code },
        } => cmd_udi(&code),
        Command::Regnum {
            command: ParseCommand::Parse { code },
        } => cmd_regnum(&code),
        Command::Synth { recipe, out, schema } => cmd_synth(&recipe, &out, schema.as_deref()),
        Command::Verify {
            dataset,
            answer_key,
            report,
            config,
        } => cmd_verify(&dataset, &answer_key, report.as_deref(), &config),
        Command::Bench {
            rows,
            seed,
            archive,
            reuse,
            workers,
        } => cmd_bench(rows, seed, archive, reuse, workers),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
