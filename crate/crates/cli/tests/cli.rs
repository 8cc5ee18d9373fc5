use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use zip::write::SimpleFileOptions;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../assets/fixtures")
}

fn mdscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdscan")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn archive(dir: &Path, member: &str, bytes: &[u8]) -> PathBuf {
    let path = dir.join("dump.zip");
    let mut zip = zip::ZipWriter::new(std::fs::File::create(&path).unwrap());
    zip.start_file(member, SimpleFileOptions::default()).unwrap();
    zip.write_all(bytes).unwrap();
    zip.finish().unwrap();
    path
}

#[test]
fn missing_archive_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = mdscan(&[
        "scan",
        "--dataset",
        s(&dir.path().join("absent.zip")),
        "--out",
        s(&dir.path().join("out")),
    ]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn foreign_header_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let zip = archive(dir.path(), "part1.csv", b"a,b,c\n1,2,3\n");
    let o = mdscan(&["scan", "--dataset", s(&zip), "--out", s(&dir.path().join("out"))]);
    assert_eq!(o.status.code(), Some(5), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unknown_pipeline_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = mdscan(&[
        "scan",
        "--dataset",
        s(&fixtures().join("fixture20.zip")),
        "--out",
        s(&dir.path().join("out")),
        "--pipeline",
        s(&dir.path().join("missing.json")),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unparseable_identifiers_exit_7() {
    assert_eq!(mdscan(&["udi", "parse", "(01)123"]).status.code(), Some(7));
    assert_eq!(mdscan(&["regnum", "parse", "nonsense"]).status.code(), Some(7));
}

#[test]
fn fixture_verifies_and_a_tampered_key_exits_8() {
    let f = fixtures();
    let args = |key: &Path| {
        mdscan(&[
            "verify",
            "--dataset",
            s(&f.join("fixture20.zip")),
            "--answer-key",
            s(key),
            "--exclusions",
            s(&f.join("fixture20.exclusions.tsv")),
        ])
    };
    let o = args(&f.join("fixture20.key.tsv"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("verdict: exact"));

    let dir = tempfile::tempdir().unwrap();
    let key = std::fs::read_to_string(f.join("fixture20.key.tsv")).unwrap();
    let mut lines: Vec<String> = key.lines().map(str::to_string).collect();
    let empty = lines.iter().position(|l| l.ends_with('\t')).unwrap();
    lines[empty].push_str("samd,mdsw");
    let tampered = dir.path().join("key.tsv");
    std::fs::write(&tampered, lines.join("\n") + "\n").unwrap();
    assert_eq!(args(&tampered).status.code(), Some(8));
}

#[test]
fn synth_then_verify_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let recipe = dir.path().join("recipe.json");
    std::fs::write(
        &recipe,
        r#"{"rows":500,"samd":0.1,"simd_kw":0.2,"ai_kw":0.05,"seed":3,"exclusions":2}"#,
    )
    .unwrap();
    let out = dir.path().join("corpus.zip");
    let o = mdscan(&["synth", "--recipe", s(&recipe), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8_lossy(&o.stdout).into_owned();
    let path_of = |label: &str| {
        text.lines()
            .find_map(|l| l.strip_prefix(label))
            .map(|p| PathBuf::from(p.trim()))
            .unwrap()
    };
    let o = mdscan(&[
        "verify",
        "--dataset",
        s(&out),
        "--answer-key",
        s(&path_of("answer key:")),
        "--exclusions",
        s(&path_of("exclusions:")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn scan_writes_requested_formats() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixtures();
    let out = dir.path().join("out");
    let o = mdscan(&[
        "scan",
        "--dataset",
        s(&f.join("fixture20.zip")),
        "--exclusions",
        s(&f.join("fixture20.exclusions.tsv")),
        "--out",
        s(&out),
        "--format",
        "json,csv,md",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let names: Vec<String> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    for ext in ["json", "csv", "md"] {
        assert!(names.iter().any(|n| n.ends_with(ext)), "no .{ext} in {names:?}");
    }
}
