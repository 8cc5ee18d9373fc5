//! Acceptance criteria. Prints one `ACCn PASS|FAIL|SKIP` line per criterion
//! and exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use mdscan_core::analytics::{Dimension, LabelGroups, crosstab_by, distribution};
use mdscan_core::annotate::{AnnotatedDevice, FunctionLabel, Pathway, SoftwareKind, Technique};
use mdscan_core::filter::{ExclusionList, MatchResult};
use mdscan_core::ingest::{IngestOptions, SchemaMap};
use mdscan_core::record::{DeviceClass, DeviceRecord};
use mdscan_core::regnum::{Issuer, Origin, RegistrationNumber, default_grammar, parse_registration_number};
use mdscan_core::scan::ScanInputs;
use mdscan_core::synth::{AnswerKey, Recipe, synthesize};
use mdscan_core::udi::{complete_gtin14, validate_gtin14_check};
use mdscan_core::verify::{VerifyReport, verify};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ACC1_CORPORA: usize = 50;
const ACC1_ROWS: u64 = 10_000;
const ACC1_BUDGET: Duration = Duration::from_secs(60);
const ACC3_MIN_RECORDS: u64 = 1_000_000;
const ACC3_EXTRA_ROWS: u64 = 25_000;
const ACC6_ROWS: u64 = 4_000_000;
const ACC6_TARGET_SECONDS: f64 = 60.0;
const ACC6_CI_SECONDS: f64 = 90.0;
const ACC6_MEMORY_BYTES: f64 = 2.0 * 1024.0 * 1024.0 * 1024.0;
const ACC9_DUMP: &str = "UDID_FULL_RELEASE_20240801.zip";

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn workspace() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixtures() -> PathBuf {
    workspace().join("assets/fixtures")
}

fn mdscan(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mdscan"))
        .args(args)
        .output()
        .expect("run mdscan")
}

fn stdout(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// `key=value` tokens of whitespace-separated output; `key: value` lines
/// are read the same way.
fn pairs(text: &str) -> BTreeMap<String, String> {
    text.replace(": ", "=")
        .split_whitespace()
        .filter_map(|t| t.split_once('=').map(|(k, v)| (k.to_string(), v.to_string())))
        .collect()
}

fn field<T: std::str::FromStr>(pairs: &BTreeMap<String, String>, key: &str) -> Option<T> {
    pairs.get(key).and_then(|v| v.parse().ok())
}

fn verify_corpus(recipe: &Recipe) -> VerifyReport {
    let dir = tempfile::tempdir().unwrap();
    let schema = SchemaMap::default_2024();
    let out = synthesize(recipe, &schema, &dir.path().join("corpus.zip")).unwrap();
    let key = AnswerKey::read(&out.answer_key).unwrap();
    let exclusions = ExclusionList::from_tsv(&std::fs::read_to_string(&out.exclusions).unwrap()).unwrap();
    let inputs = ScanInputs::bundled();
    verify(
        &out.archive,
        &schema,
        IngestOptions::default(),
        &inputs.pipeline,
        &key,
        &exclusions,
        0,
    )
    .unwrap()
}

fn random_recipe(rng: &mut ChaCha8Rng, rows: u64) -> Recipe {
    let samd = rng.gen_range(0.0..0.2);
    let simd = rng.gen_range(0.0..0.3);
    let ai = rng.gen_range(0.0..1.0) * (samd + simd);
    let mut r = Recipe::new(rows, samd, simd, ai, rng.r#gen());
    r.member_rows = rng.gen_range(0..rows);
    let ai_rows = r.counts().unwrap().aimd_candidates;
    r.exclusions = rng.gen_range(0..=ai_rows.min(10));
    r
}

fn acc1_acc3() -> (Verdict, Verdict) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC1);
    let started = Instant::now();
    let mut inexact = Vec::new();
    let mut violations = Vec::new();
    let mut records = 0u64;
    for i in 0..ACC1_CORPORA {
        let report = verify_corpus(&random_recipe(&mut rng, ACC1_ROWS));
        records += report.stats.rows_emitted;
        if !report.exact() {
            inexact.push(format!(
                "corpus {i}: {} oracle discrepancies, {} provenance failures, labels exact: {}",
                report.oracle_mismatch_count,
                report.provenance_failures,
                report.labels.iter().all(|l| l.exact())
            ));
        }
        violations.extend(report.invariant_violations.iter().map(|v| format!("corpus {i}: {v}")));
    }
    let elapsed = started.elapsed().as_secs_f64();
    let acc1 = if !inexact.is_empty() {
        Verdict::Fail(inexact.join("; "))
    } else if elapsed > ACC1_BUDGET.as_secs_f64() {
        Verdict::Fail(format!(
            "exact, but took {elapsed:.1}s (budget {}s)",
            ACC1_BUDGET.as_secs()
        ))
    } else {
        Verdict::Pass(format!(
            "{ACC1_CORPORA} x {ACC1_ROWS} records, 0 discrepancies, {elapsed:.1}s"
        ))
    };

    let mut corpora = ACC1_CORPORA;
    while records < ACC3_MIN_RECORDS {
        let report = verify_corpus(&random_recipe(&mut rng, ACC3_EXTRA_ROWS));
        records += report.stats.rows_emitted;
        violations.extend(
            report
                .invariant_violations
                .iter()
                .map(|v| format!("corpus {corpora}: {v}")),
        );
        corpora += 1;
    }
    let acc3 = if violations.is_empty() {
        Verdict::Pass(format!("{records} records over {corpora} corpora, 0 violations"))
    } else {
        Verdict::Fail(violations.join("; "))
    };
    (acc1, acc3)
}

fn acc2() -> Verdict {
    let f = fixtures();
    let out = tempfile::tempdir().unwrap();
    let o = mdscan(&[
        "scan",
        "--dataset",
        f.join("fixture20.zip").to_str().unwrap(),
        "--exclusions",
        f.join("fixture20.exclusions.tsv").to_str().unwrap(),
        "--out",
        out.path().join("report").to_str().unwrap(),
        "--format",
        "json",
    ]);
    if !o.status.success() {
        return Verdict::Fail(format!(
            "scan exited {:?}: {}",
            o.status.code(),
            String::from_utf8_lossy(&o.stderr)
        ));
    }
    let got = pairs(&stdout(&o));
    let want = [
        ("samd", "5"),
        ("simd", "8"),
        ("mdsw", "13"),
        ("aimd_candidates", "3"),
        ("final_aimd", "2"),
    ];
    let shown: Vec<String> = want
        .iter()
        .map(|(k, _)| format!("{k}={}", got.get(*k).map_or("?", String::as_str)))
        .collect();
    if want.iter().all(|(k, v)| got.get(*k).map(String::as_str) == Some(*v)) {
        Verdict::Pass(shown.join(" "))
    } else {
        Verdict::Fail(shown.join(" "))
    }
}

/// Mod-10 check digit computed right to left.
fn gtin_oracle(payload13: &str) -> u8 {
    let sum: u32 = payload13
        .bytes()
        .rev()
        .enumerate()
        .map(|(pos, d)| u32::from(d - b'0') * if pos % 2 == 0 { 3 } else { 1 })
        .sum();
    ((10 - sum % 10) % 10) as u8
}

fn acc4() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC4);
    let mut agree = 0;
    let mut undetected = 0;
    for _ in 0..10_000 {
        let body: String = (0..13).map(|_| char::from(b'0' + rng.gen_range(0..10u8))).collect();
        let full = complete_gtin14(&body).unwrap();
        if full.as_bytes()[13] - b'0' == gtin_oracle(&body) && validate_gtin14_check(&full).unwrap() {
            agree += 1;
        }
        let pos = rng.gen_range(0..14);
        let mut bytes = full.into_bytes();
        bytes[pos] = b'0' + (bytes[pos] - b'0' + rng.gen_range(1..10u8)) % 10;
        if validate_gtin14_check(std::str::from_utf8(&bytes).unwrap()).unwrap() {
            undetected += 1;
        }
    }
    let cli = mdscan(&["udi", "parse", "(01)00000000000000"]);
    let cli_ok =
        cli.status.success() && stdout(&cli).contains("agency: GS1") && stdout(&cli).contains("check_digit: valid");
    if agree == 10_000 && undetected == 0 && cli_ok {
        Verdict::Pass("10000/10000 agree with the oracle, 0 undetected single-digit perturbations".into())
    } else {
        Verdict::Fail(format!(
            "{agree}/10000 agree, {undetected} undetected perturbations, cli ok {cli_ok}"
        ))
    }
}

fn acc5() -> Verdict {
    let grammar = default_grammar();
    let mut origins = vec![Origin::Imported, Origin::Sar];
    origins.extend(grammar.domestic_issuers().into_iter().map(Origin::Domestic));
    let classes = [DeviceClass::I, DeviceClass::II, DeviceClass::III];
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC5);
    let mut failures = 0;
    for i in 0..1_000 {
        let n = RegistrationNumber::new(
            grammar,
            origins[i % origins.len()].clone(),
            rng.gen_range(1990..=2030),
            classes[i % 3],
            rng.gen_range(0..=99),
            rng.gen_range(0..=99_999),
        )
        .unwrap();
        let ok = grammar.parse(&n.raw).ok().as_ref() == Some(&n) && grammar.format(&n).ok().as_ref() == Some(&n.raw);
        failures += usize::from(!ok);
    }
    let example = parse_registration_number("国械注准20153211878")
        .map(|r| (r.device_class, r.category, r.year))
        .ok();
    let cli = pairs(&stdout(&mdscan(&["regnum", "parse", "国械注准20153211878"])));
    let cli_ok = cli.get("class").map(String::as_str) == Some("III")
        && cli.get("category").map(String::as_str) == Some("21")
        && cli.get("year").map(String::as_str) == Some("2015");
    if failures == 0 && example == Some((DeviceClass::III, 21, 2015)) && cli_ok {
        Verdict::Pass("1000/1000 round trips; 国械注准20153211878 -> class III, category 21, 2015".into())
    } else {
        Verdict::Fail(format!(
            "{failures} round-trip failures; example {example:?}; cli ok {cli_ok}"
        ))
    }
}

fn acc6() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let archive = dir.path().join("bench.zip");
    let o = mdscan(&[
        "bench",
        "--rows",
        &ACC6_ROWS.to_string(),
        "--archive",
        archive.to_str().unwrap(),
    ]);
    if !o.status.success() {
        return Verdict::Fail(format!(
            "bench exited {:?}: {}",
            o.status.code(),
            String::from_utf8_lossy(&o.stderr)
        ));
    }
    let got = pairs(&stdout(&o));
    let seconds: f64 = field(&got, "scan_seconds").unwrap_or(f64::INFINITY);
    let rss_mib: f64 = field(&got, "peak_rss_mib").unwrap_or(f64::INFINITY);
    let rows: u64 = field(&got, "rows").unwrap_or(0);
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let detail = format!("{rows} rows scanned in {seconds:.1}s on {cores} core(s), peak RSS {rss_mib:.0} MiB");
    if rows != ACC6_ROWS || rss_mib * 1024.0 * 1024.0 > ACC6_MEMORY_BYTES {
        Verdict::Fail(detail)
    } else if seconds <= ACC6_TARGET_SECONDS {
        Verdict::Pass(format!("{detail} (target {ACC6_TARGET_SECONDS}s)"))
    } else if seconds <= ACC6_CI_SECONDS {
        Verdict::Pass(format!("{detail} (within the {ACC6_CI_SECONDS}s CI tolerance)"))
    } else {
        Verdict::Fail(detail)
    }
}

fn data_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != "metadata.json") {
                files.insert(
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    files
}

fn acc7() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut recipe = Recipe::new(50_000, 0.05, 0.1, 0.03, 7);
    recipe.member_rows = 12_000;
    recipe.exclusions = 10;
    let out = synthesize(&recipe, &SchemaMap::default_2024(), &dir.path().join("c.zip")).unwrap();
    let max = std::thread::available_parallelism().map_or(1, |n| n.get()).max(4);
    let mut outputs = Vec::new();
    for workers in [1, max] {
        let target = dir.path().join(format!("out-{workers}"));
        let o = mdscan(&[
            "scan",
            "--dataset",
            out.archive.to_str().unwrap(),
            "--exclusions",
            out.exclusions.to_str().unwrap(),
            "--out",
            target.to_str().unwrap(),
            "--workers",
            &workers.to_string(),
        ]);
        if !o.status.success() {
            return Verdict::Fail(format!(
                "scan --workers {workers} failed: {}",
                String::from_utf8_lossy(&o.stderr)
            ));
        }
        outputs.push(data_files(&target));
    }
    let differing: Vec<&String> = outputs[0]
        .keys()
        .filter(|k| outputs[1].get(*k) != outputs[0].get(*k))
        .collect();
    if outputs[0].keys().eq(outputs[1].keys()) && differing.is_empty() {
        Verdict::Pass(format!(
            "{} data files byte-identical for --workers 1 and {max}",
            outputs[0].len()
        ))
    } else {
        Verdict::Fail(format!("differing files: {differing:?}"))
    }
}

fn random_device(i: usize, rng: &mut ChaCha8Rng) -> AnnotatedDevice {
    let id = format!("{i:014}");
    let record = DeviceRecord::builder(id.clone()).build().unwrap();
    let result = MatchResult {
        record_id: id.clone(),
        review_key: id,
        memberships: BTreeMap::new(),
    };
    let origins = [
        None,
        Some(Origin::Imported),
        Some(Origin::Sar),
        Some(Origin::Domestic(Issuer::National)),
        Some(Origin::Domestic(Issuer::Province("Guangdong".into()))),
    ];
    let classes = [
        None,
        Some(DeviceClass::I),
        Some(DeviceClass::II),
        Some(DeviceClass::III),
    ];
    AnnotatedDevice {
        record: Arc::new(record),
        result: Arc::new(result),
        software_kind: *SoftwareKind::ALL.choose(rng).unwrap(),
        ai_candidate: true,
        ai_flag: rng.gen_bool(0.5),
        technique: *Technique::ALL.choose(rng).unwrap(),
        specialty: ["Radiology", "Cardiology", "Unknown"].choose(rng).unwrap().to_string(),
        function: FunctionLabel::UNCATEGORIZED,
        pathway: *Pathway::ALL.choose(rng).unwrap(),
        origin: origins.choose(rng).unwrap().clone(),
        device_class: *classes.choose(rng).unwrap(),
    }
}

fn acc8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC8);
    let none = LabelGroups::default();
    let dims = [
        Dimension::Origin,
        Dimension::SoftwareKind,
        Dimension::DeviceClass,
        Dimension::Pathway,
    ];
    let mut problems = Vec::new();
    for fixture in 0..5 {
        let devices: Vec<AnnotatedDevice> = (0..1_000).map(|i| random_device(i, &mut rng)).collect();
        let full = crosstab_by(&devices, &dims, &none);
        for (i, dim) in dims.iter().enumerate() {
            let rest: Vec<Dimension> = dims
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, d)| *d)
                .collect();
            if full.marginalize(dim.as_str()).unwrap() != crosstab_by(&devices, &rest, &none) {
                problems.push(format!("fixture {fixture}: marginal over {dim} inconsistent"));
            }
        }
        for cell in &full.cells {
            let recount = devices
                .iter()
                .filter(|d| dims.iter().zip(&cell.values).all(|(dim, v)| &dim.value(d) == v))
                .count() as u64;
            if recount != cell.count {
                problems.push(format!(
                    "fixture {fixture}: cell {:?} {} vs {recount}",
                    cell.values, cell.count
                ));
            }
        }
        if full.total != 1_000 {
            problems.push(format!("fixture {fixture}: total {}", full.total));
        }
    }
    let mut technique: Vec<AnnotatedDevice> = (0..43).map(|i| random_device(i, &mut rng)).collect();
    for (i, d) in technique.iter_mut().enumerate() {
        d.technique = if i < 32 {
            Technique::DeepLearning
        } else {
            Technique::TraditionalAI
        };
    }
    let dist = distribution(&technique, Dimension::Technique, &none);
    let shown: Vec<String> = dist
        .entries
        .iter()
        .map(|e| format!("{} {}%", e.value, e.percent()))
        .collect();
    if shown != ["DeepLearning 74.4%", "TraditionalAI 25.6%"] {
        problems.push(format!("technique distribution {shown:?}"));
    }
    if problems.is_empty() {
        Verdict::Pass(format!("5 x 1000-device fixtures exact; {}", shown.join(", ")))
    } else {
        Verdict::Fail(problems.join("; "))
    }
}

fn acc9() -> Verdict {
    let path = std::env::var_os("MDSCAN_REAL_DUMP")
        .map(PathBuf::from)
        .unwrap_or_else(|| workspace().join(ACC9_DUMP));
    if !path.exists() {
        return Verdict::Skip(format!("{ACC9_DUMP} not available (set MDSCAN_REAL_DUMP to its path)"));
    }
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report");
    let o = mdscan(&[
        "scan",
        "--dataset",
        path.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
        "--format",
        "json",
    ]);
    if !o.status.success() {
        return Verdict::Fail(format!("scan failed: {}", String::from_utf8_lossy(&o.stderr)));
    }
    let got = pairs(&stdout(&o));
    let want = [
        ("mdsw", "2149"),
        ("samd", "385"),
        ("simd", "1764"),
        ("aimd_candidates", "75"),
        ("final_aimd", "43"),
    ];
    let shown: Vec<String> = want
        .iter()
        .map(|(k, _)| format!("{k}={}", got.get(*k).map_or("?", String::as_str)))
        .collect();
    let bundle = mdscan_core::report::load_structured(&report).unwrap();
    let innovation: u64 = bundle
        .alluvial_data
        .iter()
        .filter(|f| f.target == "Innovation")
        .map(|f| f.count)
        .sum();
    let detail = format!("{} innovation={innovation}", shown.join(" "));
    if want.iter().all(|(k, v)| got.get(*k).map(String::as_str) == Some(*v)) && innovation == 6 {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(format!(
            "{detail}; the audit tables in {} explain the divergence",
            report.display()
        ))
    }
}

fn main() {
    let (acc1, acc3) = acc1_acc3();
    let results = [
        ("ACC1", "oracle equivalence", acc1),
        ("ACC2", "fixture reproduction", acc2()),
        ("ACC3", "subset/disjointness invariants", acc3),
        ("ACC4", "GTIN check digit", acc4()),
        ("ACC5", "registration-number round trip", acc5()),
        ("ACC6", "performance", acc6()),
        ("ACC7", "determinism across worker counts", acc7()),
        ("ACC8", "analytics oracles", acc8()),
        ("ACC9", "real-data reproduction", acc9()),
    ];
    let mut failed = 0;
    for (id, name, verdict) in &results {
        match verdict {
            Verdict::Pass(d) => println!("{id} PASS {name}: {d}"),
            Verdict::Skip(d) => println!("{id} SKIP {name}: {d}"),
            Verdict::Fail(d) => {
                failed += 1;
                println!("{id} FAIL {name}: {d}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
