//! Registry records and the classification code embedded in each of them.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::regnum::{self, Origin, RegistrationNumber};
use crate::text::canonicalize_owned;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RecordError {
    #[error("record_id must not be empty")]
    EmptyRecordId,
    #[error("malformed classification code {raw:?}: {reason}")]
    MalformedCode { raw: String, reason: &'static str },
    #[error("origin undetermined for record {record_id:?}: no registration number or region")]
    OriginUndetermined { record_id: String },
    #[error("unknown record field {0:?}")]
    UnknownField(String),
}

/// The named record fields that schema bindings and rules can refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    RecordId,
    ProductName,
    GenericName,
    Description,
    ClassificationCodeRaw,
    RegistrationNumberRaw,
    Manufacturer,
    RegionRaw,
}

impl Field {
    pub const ALL: [Field; 8] = [
        Field::RecordId,
        Field::ProductName,
        Field::GenericName,
        Field::Description,
        Field::ClassificationCodeRaw,
        Field::RegistrationNumberRaw,
        Field::Manufacturer,
        Field::RegionRaw,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Field::RecordId => "record_id",
            Field::ProductName => "product_name",
            Field::GenericName => "generic_name",
            Field::Description => "description",
            Field::ClassificationCodeRaw => "classification_code_raw",
            Field::RegistrationNumberRaw => "registration_number_raw",
            Field::Manufacturer => "manufacturer",
            Field::RegionRaw => "region_raw",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Field {
    type Err = RecordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Field::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| RecordError::UnknownField(s.to_string()))
    }
}

/// Dump columns that are not bound to a named field, kept verbatim in
/// column order.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExtraColumns {
    names: Arc<[Arc<str>]>,
    buf: String,
    ends: Vec<u32>,
}

impl ExtraColumns {
    /// `names` must have one entry per value pushed afterwards.
    pub fn with_names(names: Arc<[Arc<str>]>) -> Self {
        ExtraColumns {
            buf: String::new(),
            ends: Vec::with_capacity(names.len()),
            names,
        }
    }

    /// Like [`with_names`](Self::with_names), reserving `bytes` of text.
    pub fn with_capacity(names: Arc<[Arc<str>]>, bytes: usize) -> Self {
        ExtraColumns {
            buf: String::with_capacity(bytes),
            ends: Vec::with_capacity(names.len()),
            names,
        }
    }

    pub fn push(&mut self, value: &str) {
        self.buf.push_str(value);
        self.ends.push(self.buf.len() as u32);
    }

    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        let i = self.names.iter().position(|n| &**n == name)?;
        self.value(i)
    }

    fn value(&self, i: usize) -> Option<&str> {
        let end = *self.ends.get(i)? as usize;
        let start = if i == 0 { 0 } else { self.ends[i - 1] as usize };
        Some(&self.buf[start..end])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        (0..self.ends.len()).map(move |i| (&*self.names[i], self.value(i).unwrap_or_default()))
    }

    fn canonicalize(&mut self) {
        // Quick-check passing on the concatenation implies it passes on
        // every value.
        if matches!(crate::text::canonicalize(&self.buf), std::borrow::Cow::Borrowed(_)) {
            return;
        }
        let values: Vec<String> = self
            .iter()
            .map(|(_, v)| crate::text::canonicalize(v).into_owned())
            .collect();
        self.buf.clear();
        self.ends.clear();
        for v in &values {
            self.push(v);
        }
    }
}

/// One registry row projected onto the fields the analysis uses.
///
/// All text is NFKC-normalized on construction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DeviceRecord {
    fields: [String; 8],
    extra: ExtraColumns,
}

impl DeviceRecord {
    pub fn builder(record_id: impl Into<String>) -> DeviceRecordBuilder {
        let mut fields: [String; 8] = Default::default();
        fields[Field::RecordId.index()] = record_id.into();
        DeviceRecordBuilder {
            fields,
            extra: ExtraColumns::default(),
        }
    }

    pub fn get(&self, field: Field) -> &str {
        &self.fields[field.index()]
    }

    pub fn record_id(&self) -> &str {
        self.get(Field::RecordId)
    }
    pub fn product_name(&self) -> &str {
        self.get(Field::ProductName)
    }
    pub fn generic_name(&self) -> &str {
        self.get(Field::GenericName)
    }
    pub fn description(&self) -> &str {
        self.get(Field::Description)
    }
    pub fn classification_code_raw(&self) -> &str {
        self.get(Field::ClassificationCodeRaw)
    }
    pub fn registration_number_raw(&self) -> &str {
        self.get(Field::RegistrationNumberRaw)
    }
    pub fn manufacturer(&self) -> &str {
        self.get(Field::Manufacturer)
    }
    pub fn region_raw(&self) -> &str {
        self.get(Field::RegionRaw)
    }
    pub fn extra(&self) -> &ExtraColumns {
        &self.extra
    }

    /// Key used by exclusion lists and sidecars: the registration number,
    /// or the record id when the registration number is blank.
    pub fn review_key(&self) -> &str {
        let reg = self.registration_number_raw().trim();
        if reg.is_empty() { self.record_id() } else { reg }
    }
}

#[derive(Debug, Clone)]
pub struct DeviceRecordBuilder {
    fields: [String; 8],
    extra: ExtraColumns,
}

impl DeviceRecordBuilder {
    pub fn field(mut self, field: Field, value: impl Into<String>) -> Self {
        self.fields[field.index()] = value.into();
        self
    }
    pub fn product_name(self, v: impl Into<String>) -> Self {
        self.field(Field::ProductName, v)
    }
    pub fn generic_name(self, v: impl Into<String>) -> Self {
        self.field(Field::GenericName, v)
    }
    pub fn description(self, v: impl Into<String>) -> Self {
        self.field(Field::Description, v)
    }
    pub fn classification_code(self, v: impl Into<String>) -> Self {
        self.field(Field::ClassificationCodeRaw, v)
    }
    pub fn registration_number(self, v: impl Into<String>) -> Self {
        self.field(Field::RegistrationNumberRaw, v)
    }
    pub fn manufacturer(self, v: impl Into<String>) -> Self {
        self.field(Field::Manufacturer, v)
    }
    pub fn region(self, v: impl Into<String>) -> Self {
        self.field(Field::RegionRaw, v)
    }
    pub fn extra(mut self, extra: ExtraColumns) -> Self {
        self.extra = extra;
        self
    }

    pub fn build(self) -> Result<DeviceRecord, RecordError> {
        let DeviceRecordBuilder { fields, mut extra } = self;
        let fields = fields.map(canonicalize_owned);
        if fields[Field::RecordId.index()].trim().is_empty() {
            return Err(RecordError::EmptyRecordId);
        }
        extra.canonicalize();
        Ok(DeviceRecord { fields, extra })
    }
}

/// Hierarchical product classification code such as `21-01-01`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassificationCode {
    segments: Vec<u8>,
}

impl ClassificationCode {
    /// 1 to 3 segments, each in 0..=99.
    pub fn new(segments: Vec<u8>) -> Option<Self> {
        if segments.is_empty() || segments.len() > 3 || segments.iter().any(|&s| s > 99) {
            return None;
        }
        Some(ClassificationCode { segments })
    }

    pub fn segments(&self) -> &[u8] {
        &self.segments
    }

    pub fn starts_with(&self, prefix: &[u8]) -> bool {
        self.segments.starts_with(prefix)
    }
}

impl fmt::Display for ClassificationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.segments.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{s:02}")?;
        }
        Ok(())
    }
}

impl FromStr for ClassificationCode {
    type Err = RecordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_classification_code(s)
    }
}

/// Parses `NN-NN-NN`, `NN-NN` or `NN`; surrounding whitespace is ignored.
pub fn parse_classification_code(raw: &str) -> Result<ClassificationCode, RecordError> {
    let malformed = |reason| RecordError::MalformedCode {
        raw: raw.to_string(),
        reason,
    };
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Err(malformed("empty code"));
    }
    let mut segments = Vec::with_capacity(3);
    for part in trimmed.split('-') {
        if segments.len() == 3 {
            return Err(malformed("more than three segments"));
        }
        let bytes = part.as_bytes();
        if bytes.len() != 2 {
            return Err(malformed("segment length is not 2"));
        }
        if !bytes.iter().all(u8::is_ascii_digit) {
            return Err(malformed("non-digit segment"));
        }
        segments.push((bytes[0] - b'0') * 10 + (bytes[1] - b'0'));
    }
    Ok(ClassificationCode { segments })
}

/// Category code that marks standalone software.
pub const SAMD_CATEGORY: u8 = 21;

/// True iff the first segment is 21.
pub fn is_samd_code(code: &ClassificationCode) -> bool {
    code.segments[0] == SAMD_CATEGORY
}

/// Risk class, ordered `I < II < III`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DeviceClass {
    I,
    II,
    III,
}

impl DeviceClass {
    pub fn from_digit(d: u8) -> Option<Self> {
        match d {
            1 => Some(DeviceClass::I),
            2 => Some(DeviceClass::II),
            3 => Some(DeviceClass::III),
            _ => None,
        }
    }

    pub fn digit(self) -> u8 {
        match self {
            DeviceClass::I => 1,
            DeviceClass::II => 2,
            DeviceClass::III => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DeviceClass::I => "I",
            DeviceClass::II => "II",
            DeviceClass::III => "III",
        }
    }
}

impl fmt::Display for DeviceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Origin plus whether it came from the region fallback.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedOrigin {
    pub origin: Origin,
    pub registration: Option<RegistrationNumber>,
    pub from_region_fallback: bool,
}

/// Origin from the registration number, falling back to `region_raw`.
pub fn origin_of(record: &DeviceRecord) -> Result<ResolvedOrigin, RecordError> {
    origin_with(record, regnum::default_grammar())
}

pub fn origin_with(
    record: &DeviceRecord,
    grammar: &regnum::RegistrationGrammar,
) -> Result<ResolvedOrigin, RecordError> {
    let reg = record.registration_number_raw().trim();
    if !reg.is_empty()
        && let Ok(parsed) = grammar.parse(reg)
    {
        return Ok(ResolvedOrigin {
            origin: parsed.origin.clone(),
            registration: Some(parsed),
            from_region_fallback: false,
        });
    }
    grammar
        .origin_from_region(record.region_raw())
        .map(|origin| ResolvedOrigin {
            origin,
            registration: None,
            from_region_fallback: true,
        })
        .ok_or_else(|| RecordError::OriginUndetermined {
            record_id: record.record_id().to_string(),
        })
}

/// A record whose registration category and classification code disagree
/// about being standalone software.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CodeInconsistency {
    pub record_id: String,
    pub classification_code: String,
    pub registration_number: String,
}

/// Reports a record where one identifier says category 21 and the other
/// does not. Records with either field unparseable are not judged.
pub fn check_category_consistency(
    record: &DeviceRecord,
    grammar: &regnum::RegistrationGrammar,
) -> Option<CodeInconsistency> {
    let code = parse_classification_code(record.classification_code_raw()).ok()?;
    let reg = grammar.parse(record.registration_number_raw().trim()).ok()?;
    if (reg.category == SAMD_CATEGORY) != is_samd_code(&code) {
        Some(CodeInconsistency {
            record_id: record.record_id().to_string(),
            classification_code: record.classification_code_raw().to_string(),
            registration_number: record.registration_number_raw().to_string(),
        })
    } else {
        None
    }
}
