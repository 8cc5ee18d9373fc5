use std::io::Write;
use std::path::{Path, PathBuf};

use mdscan_core::ingest::{EncodingPolicy, IngestError, IngestOptions, SchemaMap, open_dataset};
use mdscan_core::record::DeviceRecord;
use zip::write::SimpleFileOptions;

const SCHEMA: &str = r#"{
  "bindings": {
    "record_id": "id",
    "generic_name": "generic",
    "product_name": "name",
    "description": "desc",
    "classification_code_raw": "code",
    "registration_number_raw": "reg"
  },
  "required": ["record_id", "generic_name", "description", "classification_code_raw", "registration_number_raw"]
}"#;

const HEADER: &str = "id,generic,name,desc,code,reg,note\n";

fn schema() -> SchemaMap {
    SchemaMap::from_json(SCHEMA).unwrap()
}

fn archive(dir: &Path, members: &[(&str, &[u8])]) -> PathBuf {
    let path = dir.join("dump.zip");
    let mut zip = zip::ZipWriter::new(std::fs::File::create(&path).unwrap());
    for (name, bytes) in members {
        zip.start_file(*name, SimpleFileOptions::default()).unwrap();
        zip.write_all(bytes).unwrap();
    }
    zip.finish().unwrap();
    path
}

fn read_all(
    path: &Path,
    options: IngestOptions,
) -> Result<(Vec<DeviceRecord>, mdscan_core::ingest::IngestStats), IngestError> {
    let mut records = open_dataset(path, &schema(), options)?.records();
    let mut out = Vec::new();
    for r in records.by_ref() {
        out.push(r?);
    }
    Ok((out, records.stats()))
}

#[test]
fn clean_rows_bind_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "{HEADER}\
         06901234567892,医用软件,Lung CAD,\"deep learning, CT\",21-01-01,国械注准20213210001,a\n\
         06901234567908,超声设备,Echo,\"line one\nline two\",06-07-01,国械注准20203060002,b\n\
         06901234567915,ＡＩ软件,Ｆｕｌｌ,text,21-02-00,,c\n"
    );
    let path = archive(dir.path(), &[("part-0.csv", body.as_bytes())]);
    let (records, stats) = read_all(&path, IngestOptions::default()).unwrap();
    assert_eq!(stats.rows_read, 3);
    assert_eq!(stats.rows_emitted, 3);
    assert!(stats.balanced());
    let ids: Vec<&str> = records.iter().map(|r| r.record_id()).collect();
    assert_eq!(ids, ["06901234567892", "06901234567908", "06901234567915"]);
    assert_eq!(records[0].description(), "deep learning, CT");
    assert_eq!(records[1].description(), "line one\nline two");
    assert_eq!(records[2].generic_name(), "AI软件");
    assert_eq!(records[2].product_name(), "Full");
    assert_eq!(records[2].review_key(), "06901234567915");
    assert_eq!(records[0].extra().get("note"), Some("a"));
}

#[test]
fn malformed_rows_are_skipped_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{HEADER}1,g,n,d,21-01-01,r,x\n2,g,n,d\n,g,n,d,21,r,x\n4,g,n,d,21,r,x\n");
    let path = archive(dir.path(), &[("a.csv", body.as_bytes())]);
    let (records, stats) = read_all(&path, IngestOptions::default()).unwrap();
    assert_eq!(records.len(), 2);
    assert_eq!(stats.rows_read, 4);
    assert_eq!(stats.rows_skipped_malformed, 2);
    assert_eq!(stats.per_error_counts.get("field_count"), Some(&1));
    assert_eq!(stats.per_error_counts.get("empty_record_id"), Some(&1));
    assert!(stats.examples[0].starts_with("a.csv:3:"), "{:?}", stats.examples);
    assert!(stats.balanced());
}

#[test]
fn gbk_members_decode() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("{HEADER}1,医用软件,产品,人工智能辅助诊断,21-01-01,国械注准20213210001,x\n");
    let (gbk, _, bad) = encoding_rs::GBK.encode(&body);
    assert!(!bad);
    let path = archive(dir.path(), &[("gbk.csv", &gbk)]);
    for policy in [EncodingPolicy::AutoDetect, EncodingPolicy::Gbk] {
        let options = IngestOptions {
            encoding: policy,
            ..IngestOptions::default()
        };
        let (records, _) = read_all(&path, options).unwrap();
        assert_eq!(records[0].description(), "人工智能辅助诊断");
    }
    let strict = IngestOptions {
        encoding: EncodingPolicy::Utf8,
        ..IngestOptions::default()
    };
    assert!(matches!(
        read_all(&path, strict),
        Err(IngestError::EncodingError { .. })
    ));
}

#[test]
fn utf8_bom_is_stripped() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("\u{feff}{HEADER}1,g,n,d,21,r,x\n");
    let path = archive(dir.path(), &[("bom.csv", body.as_bytes())]);
    assert_eq!(read_all(&path, IngestOptions::default()).unwrap().0.len(), 1);
}

#[test]
fn missing_required_column_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let path = archive(dir.path(), &[("m.csv", b"id,generic,name,code,reg\n1,g,n,21,r\n")]);
    match open_dataset(&path, &schema(), IngestOptions::default()) {
        Err(IngestError::HeaderMismatch { member, missing }) => {
            assert_eq!(member, "m.csv");
            assert_eq!(missing, ["description (desc)"]);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn unreadable_archives_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.zip");
    std::fs::write(&junk, b"not a zip").unwrap();
    assert!(matches!(
        open_dataset(&junk, &schema(), IngestOptions::default()),
        Err(IngestError::ArchiveUnreadable { .. })
    ));
    let empty = archive(dir.path(), &[("readme.md", b"nothing")]);
    assert!(matches!(
        open_dataset(&empty, &schema(), IngestOptions::default()),
        Err(IngestError::ArchiveUnreadable { .. })
    ));
}

#[test]
fn members_are_read_in_name_order_regardless_of_batch_size() {
    let dir = tempfile::tempdir().unwrap();
    let mut members = Vec::new();
    for m in ["b.csv", "a.csv", "__MACOSX/a.csv", "c.txt"] {
        let mut body = HEADER.to_string();
        for i in 0..50 {
            body.push_str(&format!("{m}-{i},g,n,d,21,r,x\n"));
        }
        members.push((m, body));
    }
    let refs: Vec<(&str, &[u8])> = members.iter().map(|(n, b)| (*n, b.as_bytes())).collect();
    let path = archive(dir.path(), &refs);
    let ids = |batch_rows| {
        let options = IngestOptions {
            batch_rows,
            ..IngestOptions::default()
        };
        read_all(&path, options)
            .unwrap()
            .0
            .iter()
            .map(|r| r.record_id().to_string())
            .collect::<Vec<_>>()
    };
    let reference = ids(4096);
    assert_eq!(reference.len(), 150);
    assert_eq!(reference[0], "a.csv-0");
    assert_eq!(reference[149], "c.txt-49");
    for batch_rows in [1, 7, 50, 64] {
        assert_eq!(ids(batch_rows), reference);
    }
}
