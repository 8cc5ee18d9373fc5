//! Dump-shaped synthetic corpora with a ground-truth answer key.
//!
//! Each row is built from its intended labels: SaMD rows get a category-21
//! classification code, SiMD rows a hardware code plus a SiMD keyword in a
//! scanned field, AI rows an AI keyword. Filler text is drawn from
//! vocabularies that contain no pipeline keyword, so the labels written to
//! the key are the labels the two-layer pipeline must reproduce.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use encoding_rs::GBK;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, ZipWriter};

use crate::filter::TermLexicon;
use crate::ingest::{MemberEncoding, SchemaMap};
use crate::record::{DeviceClass, Field};
use crate::regnum::{Issuer, Origin, RegistrationGrammar, RegistrationNumber, default_grammar};
use crate::udi::complete_gtin14;

/// SiMD keyword terms of the two-layer strategy.
pub const SIMD_TERMS: [&str; 8] = [
    "software",
    "imaging device",
    "surgical device",
    "monitoring device",
    "automated measurement",
    "intelligent analysis",
    "noise reduction optimization",
    "image enhancement",
];

/// AI keyword terms of the two-layer strategy.
pub const AI_TERMS: [&str; 8] = [
    "Artificial Intelligence",
    "Machine learning",
    "Deep learning",
    "Reinforcement learning",
    "Auxiliary diagnosis",
    "Auxiliary treatment",
    "Convolutional Neural Network (CNN)",
    "Recurrent Neural Network (RNN)",
];

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("recipe: {0}")]
    Recipe(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("archive: {0}")]
    Zip(#[from] zip::result::ZipError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("answer key line {line}: {reason}")]
    Key { line: usize, reason: String },
}

fn default_true() -> bool {
    true
}

/// What to generate. Proportions are of `rows`; AI rows are a subset of the
/// SaMD and SiMD rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    pub rows: u64,
    #[serde(default)]
    pub samd: f64,
    #[serde(default)]
    pub simd_kw: f64,
    #[serde(default)]
    pub ai_kw: f64,
    #[serde(default)]
    pub seed: u64,
    /// Rows per archive member; 0 keeps everything in one member.
    #[serde(default)]
    pub member_rows: u64,
    /// How many AI rows to list in the companion exclusion file.
    #[serde(default)]
    pub exclusions: u64,
    /// Case and width variants, keywords in unscanned fields, look-alike
    /// codes, quoted delimiters and line breaks.
    #[serde(default = "default_true")]
    pub adversarial: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoding: Option<MemberEncoding>,
}

impl Recipe {
    pub fn new(rows: u64, samd: f64, simd_kw: f64, ai_kw: f64, seed: u64) -> Self {
        Recipe {
            rows,
            samd,
            simd_kw,
            ai_kw,
            seed,
            member_rows: 0,
            exclusions: 0,
            adversarial: true,
            encoding: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SynthError> {
        let r: Recipe = serde_json::from_str(text).map_err(|e| SynthError::Recipe(e.to_string()))?;
        r.counts()?;
        Ok(r)
    }

    /// Category sizes: each proportion times `rows`, rounded down.
    pub fn counts(&self) -> Result<SynthCounts, SynthError> {
        let take = |name: &str, p: f64| -> Result<u64, SynthError> {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::Recipe(format!("{name} proportion {p} outside [0, 1]")));
            }
            Ok((self.rows as f64 * p + 1e-9).floor() as u64)
        };
        let samd = take("samd", self.samd)?;
        let simd = take("simd_kw", self.simd_kw)?;
        let ai = take("ai_kw", self.ai_kw)?;
        if samd + simd > self.rows {
            return Err(SynthError::Recipe("samd + simd_kw exceed the row count".into()));
        }
        if ai > samd + simd {
            return Err(SynthError::Recipe(
                "ai_kw rows must be a subset of samd + simd_kw rows".into(),
            ));
        }
        if self.exclusions > ai {
            return Err(SynthError::Recipe(format!(
                "{} exclusions but only {ai} AI rows",
                self.exclusions
            )));
        }
        if self.rows > u64::from(u32::MAX) {
            return Err(SynthError::Recipe("row count too large".into()));
        }
        Ok(SynthCounts {
            rows: self.rows,
            samd,
            simd,
            mdsw: samd + simd,
            aimd_candidates: ai,
            aimd_final: ai - self.exclusions,
            plain: self.rows - samd - simd,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthCounts {
    pub rows: u64,
    pub samd: u64,
    pub simd: u64,
    pub mdsw: u64,
    pub aimd_candidates: u64,
    pub aimd_final: u64,
    pub plain: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthOutput {
    pub archive: PathBuf,
    pub answer_key: PathBuf,
    pub exclusions: PathBuf,
    pub counts: SynthCounts,
}

/// `corpus.zip` → `corpus.key.tsv`.
pub fn answer_key_path(archive: &Path) -> PathBuf {
    archive.with_extension("key.tsv")
}

/// `corpus.zip` → `corpus.exclusions.tsv`.
pub fn exclusions_path(archive: &Path) -> PathBuf {
    archive.with_extension("exclusions.tsv")
}

/// Ground-truth labels of one row, as a bit set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelSet(u8);

impl LabelSet {
    pub const NAMES: [&'static str; 5] = ["samd", "simd", "mdsw", "aimd_candidates", "aimd_final"];

    fn from_flags(flags: u8) -> Self {
        let samd = flags & SAMD != 0;
        let simd = flags & SIMD != 0;
        let ai = flags & AI != 0;
        let excluded = flags & EXCLUDED != 0;
        let mut bits = 0;
        for (i, on) in [samd, simd, samd || simd, ai, ai && !excluded].into_iter().enumerate() {
            if on {
                bits |= 1 << i;
            }
        }
        LabelSet(bits)
    }

    pub fn contains(self, label: &str) -> bool {
        Self::NAMES
            .iter()
            .position(|n| *n == label)
            .is_some_and(|i| self.0 & (1 << i) != 0)
    }

    pub fn iter(self) -> impl Iterator<Item = &'static str> {
        Self::NAMES
            .into_iter()
            .enumerate()
            .filter(move |(i, _)| self.0 & (1 << i) != 0)
            .map(|(_, n)| n)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut bits = 0;
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let i = Self::NAMES
                .iter()
                .position(|n| *n == part)
                .ok_or_else(|| format!("unknown label {part:?}"))?;
            bits |= 1 << i;
        }
        Ok(LabelSet(bits))
    }
}

impl std::fmt::Display for LabelSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.iter().collect::<Vec<_>>().join(","))
    }
}

/// Row id → labels, in archive order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnswerKey {
    pub rows: Vec<(String, LabelSet)>,
}

impl AnswerKey {
    pub fn read(path: &Path) -> Result<Self, SynthError> {
        let mut rows = Vec::new();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if i == 0 || line.is_empty() {
                continue;
            }
            let (id, labels) = line.split_once('\t').unwrap_or((&line, ""));
            let labels = LabelSet::parse(labels).map_err(|reason| SynthError::Key { line: i + 1, reason })?;
            rows.push((id.to_string(), labels));
        }
        Ok(AnswerKey { rows })
    }

    pub fn count(&self, label: &str) -> u64 {
        self.rows.iter().filter(|(_, l)| l.contains(label)).count() as u64
    }

    pub fn counts(&self) -> BTreeMap<&'static str, u64> {
        LabelSet::NAMES.iter().map(|n| (*n, self.count(n))).collect()
    }
}

const SAMD: u8 = 1;
const SIMD: u8 = 2;
const AI: u8 = 4;
const EXCLUDED: u8 = 8;

// Filler vocabularies. None of these contains a pipeline keyword, alone or
// joined to a neighbour; a unit test enforces that.
const FILLER_CJK: &[&str] = &[
    "本产品由主机和附件组成",
    "适用于医疗机构使用",
    "产品为一次性使用",
    "采用环氧乙烷灭菌",
    "有效期为两年",
    "用于临床样本检测",
    "由导管和接头组成",
    "配合专用耗材使用",
    "供专业人员操作",
    "符合相关行业标准",
    "包装规格为单支装",
    "储存于阴凉干燥处",
];
const FILLER_EN: &[&str] = &[
    "single use",
    "sterile package",
    "for professional use",
    "stainless steel body",
    "valid for two years",
    "store at room temperature",
    "consists of host unit and cable",
    "clinical sample test",
];
const NEUTRAL_GENERIC: &[&str] = &[
    "一次性使用无菌注射器",
    "医用电子血压计",
    "骨科内固定钢板",
    "血液细胞分析仪",
    "心电图机",
    "医用外科口罩",
    "一次性使用输液器",
    "超声诊断仪",
    "Infusion Pump",
    "Blood Glucose Meter",
];
const SOFTWARE_GENERIC: &[&str] = &[
    "医学图像处理软件",
    "放射治疗计划软件",
    "中央监护软件",
    "医学影像存储与传输软件",
    "心电分析软件",
    "Medical Image Viewer Software",
];
const AI_GENERIC: &[&str] = &[
    "肺结节CT图像辅助检测软件",
    "糖尿病视网膜病变眼底图像辅助诊断软件",
    "骨折X射线图像辅助检测软件",
    "颅内出血CT图像辅助分诊软件",
    "冠状动脉CT血管成像辅助评估软件",
    "乳腺X射线图像辅助诊断软件",
    "Lung Nodule CT Image Auxiliary Detection Software",
    "Chronic Glaucoma-like Optic Neuropathy Fundus Image Auxiliary Diagnosis Software",
];
const HOST_PRODUCTS: &[&str] = &[
    "数字化X射线摄影系统",
    "多参数监护仪",
    "全自动生化分析仪",
    "内窥镜摄像系统",
    "Patient Monitor",
];
const BRANDS: &[&str] = &["康泰", "北辰", "安和", "Unison", "Helix", "Norden"];
const EXTRA_VALUES: &[&str] = &["是", "否", "GS1", "2024-08-01", "1", "", "单支装", "常温"];

fn fullwidth(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            ' ' => '\u{3000}',
            '!'..='~' => char::from_u32(c as u32 - 0x21 + 0xFF01).unwrap_or(c),
            _ => c,
        })
        .collect()
}

struct RowWriter<'a> {
    rng: ChaCha8Rng,
    adversarial: bool,
    simd_forms: Vec<Vec<String>>,
    ai_forms: Vec<Vec<String>>,
    grammar: &'a RegistrationGrammar,
    issuers: Vec<Issuer>,
    sar_available: bool,
}

impl RowWriter<'_> {
    fn pick<'s>(&mut self, items: &'s [&'s str]) -> &'s str {
        items[self.rng.gen_range(0..items.len())]
    }

    fn surface(&mut self, ai: bool) -> String {
        let forms = if ai { &self.ai_forms } else { &self.simd_forms };
        let term = &forms[self.rng.gen_range(0..forms.len())];
        let s = term[self.rng.gen_range(0..term.len())].clone();
        if !self.adversarial || !s.is_ascii() {
            return s;
        }
        match self.rng.gen_range(0..4) {
            0 => s.to_uppercase(),
            1 => s.to_lowercase(),
            2 => fullwidth(&s),
            _ => s,
        }
    }

    fn filler(&mut self) -> String {
        if self.rng.gen_bool(0.7) {
            self.pick(FILLER_CJK).to_string()
        } else {
            self.pick(FILLER_EN).to_string()
        }
    }

    /// Filler with `insert` placed between two filler phrases.
    fn text_with(&mut self, insert: Option<&str>) -> String {
        let mut s = self.filler();
        let sep = if self.adversarial && self.rng.gen_bool(0.2) {
            ""
        } else {
            "；"
        };
        if let Some(kw) = insert {
            s.push_str(sep);
            s.push_str(kw);
            s.push_str(sep);
        } else {
            s.push('，');
        }
        s.push_str(&self.filler());
        if self.adversarial && self.rng.gen_bool(0.05) {
            s.push_str("，规格\"A,B\"\n第二行");
        }
        s
    }

    fn registration(&mut self, serial: u32, category: u8) -> String {
        let year = self.rng.gen_range(2015..=2024);
        let roll = self.rng.gen_range(0..10);
        let (origin, class) = match roll {
            0..=2 => (Origin::Domestic(Issuer::National), DeviceClass::III),
            3..=6 => {
                let i = self.rng.gen_range(0..self.issuers.len());
                (Origin::Domestic(self.issuers[i].clone()), DeviceClass::II)
            }
            7 if self.sar_available => (Origin::Sar, DeviceClass::II),
            _ => (
                Origin::Imported,
                if self.rng.gen_bool(0.5) {
                    DeviceClass::II
                } else {
                    DeviceClass::III
                },
            ),
        };
        let r = RegistrationNumber::new(self.grammar, origin, year, class, category, serial)
            .expect("generated registration fields are in range");
        if self.adversarial && self.rng.gen_bool(0.05) {
            format!("{}号", r.raw)
        } else {
            r.raw
        }
    }

    fn hardware_code(&mut self) -> String {
        let first = loop {
            let c = self.rng.gen_range(1..=22u8);
            if c != 21 {
                break c;
            }
        };
        format!(
            "{first:02}-{:02}-{:02}",
            self.rng.gen_range(1..=15),
            self.rng.gen_range(1..=9)
        )
    }

    fn samd_code(&mut self) -> String {
        let code = format!("21-{:02}-{:02}", self.rng.gen_range(1..=10), self.rng.gen_range(1..=3));
        if !self.adversarial {
            return code;
        }
        match self.rng.gen_range(0..10) {
            0 => fullwidth(&code),
            1 => code[..5].to_string(),
            2 => "21".to_string(),
            3 => format!(" {code} "),
            _ => code,
        }
    }

    /// Bound field values for one row with the given flags.
    fn row(&mut self, index: u32, flags: u8) -> [String; 8] {
        let ai = flags & AI != 0;
        let mut f: [String; 8] = Default::default();
        let di = complete_gtin14(&format!("0{:012}", 690_000_000_000u64 + u64::from(index))).expect("13 digits");
        f[Field::RecordId.index()] = di;
        let brand = self.pick(BRANDS).to_string();
        let mut generic = if ai {
            self.pick(AI_GENERIC)
        } else if flags & (SAMD | SIMD) != 0 && self.rng.gen_bool(0.5) {
            self.pick(SOFTWARE_GENERIC)
        } else {
            self.pick(NEUTRAL_GENERIC)
        }
        .to_string();
        let mut product = format!(
            "{brand} {}",
            if flags & SIMD != 0 {
                self.pick(HOST_PRODUCTS)
            } else {
                &generic
            }
        );
        let mut description_kw: Option<String> = None;
        let mut code;
        let mut category = self.rng.gen_range(1..=20u8);

        if flags & SAMD != 0 {
            code = self.samd_code();
            category = 21;
            if self.rng.gen_bool(0.5) {
                description_kw = Some(self.surface(false));
            }
        } else if flags & SIMD != 0 {
            code = self.hardware_code();
            let kw = self.surface(false);
            if self.rng.gen_bool(0.5) {
                description_kw = Some(kw);
            } else {
                product.push(' ');
                product.push_str(&kw);
            }
        } else {
            code = self.hardware_code();
            if self.adversarial {
                match self.rng.gen_range(0..8) {
                    0 => description_kw = Some(self.surface(true)),
                    1 => {
                        generic.push_str(&self.surface(false));
                    }
                    2 => {
                        code = format!("{:02}-21-01", self.rng.gen_range(1..=20));
                        category = 21;
                    }
                    3 => code = "2１A".to_string(),
                    4 => generic = self.pick(AI_GENERIC).to_string(),
                    5 => code.clear(),
                    _ => {}
                }
            }
        }
        if ai {
            let kw = self.surface(true);
            match self.rng.gen_range(0..3) {
                0 => match &mut description_kw {
                    Some(d) => {
                        d.push('，');
                        d.push_str(&kw);
                    }
                    None => description_kw = Some(kw),
                },
                1 => {
                    product.push(' ');
                    product.push_str(&kw);
                }
                _ => generic.push_str(&kw),
            }
        }
        let description = self.text_with(description_kw.as_deref());
        let registration = if self.adversarial && flags == 0 && self.rng.gen_bool(0.02) {
            String::new()
        } else {
            self.registration(index, category)
        };
        f[Field::ProductName.index()] = product;
        f[Field::GenericName.index()] = generic;
        f[Field::Description.index()] = description;
        f[Field::ClassificationCodeRaw.index()] = code;
        f[Field::RegistrationNumberRaw.index()] = registration;
        f[Field::Manufacturer.index()] = format!("{brand}医疗器械有限公司");
        f
    }
}

fn assign_flags(recipe: &Recipe, counts: &SynthCounts, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let rows = recipe.rows as usize;
    let mut flags = vec![0u8; rows];
    flags[..counts.samd as usize].fill(SAMD);
    flags[counts.samd as usize..counts.mdsw as usize].fill(SIMD);
    flags.shuffle(rng);
    let mut mdsw: Vec<u32> = (0..rows as u32).filter(|&i| flags[i as usize] != 0).collect();
    let (ai, _) = mdsw.partial_shuffle(rng, counts.aimd_candidates as usize);
    let mut ai = ai.to_vec();
    ai.sort_unstable();
    for &i in &ai {
        flags[i as usize] |= AI;
    }
    let (excluded, _) = ai.partial_shuffle(rng, recipe.exclusions as usize);
    for &i in excluded.iter() {
        flags[i as usize] |= EXCLUDED;
    }
    flags
}

struct MemberSink {
    csv: csv::Writer<Vec<u8>>,
    delimiter: u8,
    encoding: MemberEncoding,
}

fn csv_buffer(delimiter: u8) -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(Vec::with_capacity(1 << 21))
}

impl MemberSink {
    fn drain(&mut self, zip: &mut ZipWriter<BufWriter<File>>, force: bool) -> Result<(), SynthError> {
        self.csv.flush()?;
        if !force && self.csv.get_ref().len() < (1 << 20) {
            return Ok(());
        }
        let full = std::mem::replace(&mut self.csv, csv_buffer(self.delimiter));
        let bytes = full.into_inner().map_err(|e| e.into_error())?;
        match self.encoding {
            MemberEncoding::Utf8 => zip.write_all(&bytes)?,
            MemberEncoding::Gbk => {
                let text = std::str::from_utf8(&bytes).expect("csv output is UTF-8");
                let (encoded, _, unmappable) = GBK.encode(text);
                if unmappable {
                    return Err(SynthError::Recipe("text not representable in GBK".into()));
                }
                zip.write_all(&encoded)?;
            }
        }
        Ok(())
    }
}

/// Writes the archive, its answer key and its exclusion file.
pub fn synthesize(recipe: &Recipe, schema: &SchemaMap, archive: &Path) -> Result<SynthOutput, SynthError> {
    let counts = recipe.counts()?;
    let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
    let flags = assign_flags(recipe, &counts, &mut rng);

    let columns = schema.columns();
    let mut slots: Vec<Option<Field>> = vec![None; columns.len()];
    for (field, col) in schema.bindings() {
        let i = columns
            .iter()
            .position(|c| c == col)
            .expect("schema binds only listed columns");
        slots[i] = Some(*field);
    }
    let delimiter = schema.delimiter().unwrap_or(b',');
    let encoding = recipe.encoding.unwrap_or(MemberEncoding::Utf8);

    let lexicon = TermLexicon::bundled();
    let grammar = default_grammar();
    let issuers: Vec<Issuer> = grammar
        .domestic_issuers()
        .into_iter()
        .filter(|i| matches!(i, Issuer::Province(_)))
        .collect();
    let sar_available = grammar
        .format(&RegistrationNumber {
            origin: Origin::Sar,
            year: 2020,
            device_class: DeviceClass::II,
            category: 1,
            serial: 1,
            raw: String::new(),
        })
        .is_ok();
    let mut writer = RowWriter {
        rng: ChaCha8Rng::seed_from_u64(recipe.seed ^ 0x5eed0fc0de),
        adversarial: recipe.adversarial,
        simd_forms: SIMD_TERMS.iter().map(|t| lexicon.expand(t)).collect(),
        ai_forms: AI_TERMS.iter().map(|t| lexicon.expand(t)).collect(),
        grammar,
        issuers,
        sar_available,
    };

    let options = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .compression_level(Some(1))
        .last_modified_time(zip::DateTime::default())
        .large_file(true);
    let mut zip = ZipWriter::new(BufWriter::new(File::create(archive)?));
    let key_path = answer_key_path(archive);
    let mut key = BufWriter::new(File::create(&key_path)?);
    writeln!(key, "record_id\tlabels")?;

    let per_member = if recipe.member_rows == 0 {
        recipe.rows.max(1)
    } else {
        recipe.member_rows
    };
    let mut sink: Option<MemberSink> = None;
    let mut member = 0usize;
    let mut excluded_keys = Vec::new();
    let mut extra_pick = 0usize;

    for i in 0..=recipe.rows {
        let start_member = i == 0 || (i < recipe.rows && i % per_member == 0);
        if start_member {
            if let Some(mut s) = sink.take() {
                s.drain(&mut zip, true)?;
            }
            zip.start_file(format!("part-{member:04}.csv"), options)?;
            member += 1;
            let mut csv = csv_buffer(delimiter);
            csv.write_record(&columns)?;
            sink = Some(MemberSink {
                csv,
                delimiter,
                encoding,
            });
        }
        if i == recipe.rows {
            break;
        }
        let row_flags = flags[i as usize];
        let values = writer.row(i as u32, row_flags);
        let s = sink.as_mut().expect("member open");
        let record = slots.iter().map(|slot| match slot {
            Some(f) => values[f.index()].as_str(),
            None => {
                extra_pick = (extra_pick + 7) % EXTRA_VALUES.len();
                EXTRA_VALUES[extra_pick]
            }
        });
        s.csv.write_record(record)?;
        s.drain(&mut zip, false)?;

        let labels = LabelSet::from_flags(row_flags);
        writeln!(key, "{}\t{labels}", values[Field::RecordId.index()])?;
        if row_flags & EXCLUDED != 0 {
            let reg = values[Field::RegistrationNumberRaw.index()].trim();
            let review_key = if reg.is_empty() {
                values[Field::RecordId.index()].as_str()
            } else {
                reg
            };
            excluded_keys.push(review_key.to_string());
        }
    }
    if let Some(mut s) = sink.take() {
        s.drain(&mut zip, true)?;
    }
    zip.finish()?.flush()?;
    key.flush()?;

    let excl_path = exclusions_path(archive);
    let mut excl = BufWriter::new(File::create(&excl_path)?);
    writeln!(excl, "# Synthetic false positives to drop from the AI candidates.")?;
    writeln!(excl, "key\treason")?;
    for k in &excluded_keys {
        writeln!(excl, "{k}\tsynthetic false positive")?;
    }
    excl.flush()?;

    Ok(SynthOutput {
        archive: archive.to_path_buf(),
        answer_key: key_path,
        exclusions: excl_path,
        counts,
    })
}
