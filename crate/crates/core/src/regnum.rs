//! Registration-certificate numbers.
//!
//! A certificate number is a table-driven prefix (issuer and approval kind)
//! followed by `YYYY C NN SSSS…`. The prefix table and the region table are
//! data files; the defaults ship under `assets/paper_default/`.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::DeviceClass;
use crate::text::fold;

pub const DEFAULT_PREFIX_TABLE: &str = include_str!("../../../assets/paper_default/regnum_prefixes.tsv");
pub const DEFAULT_REGION_TABLE: &str = include_str!("../../../assets/paper_default/regions.tsv");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegistrationError {
    #[error("malformed registration number {raw:?}: {reason}")]
    MalformedRegistration { raw: String, reason: &'static str },
    #[error("registration number {raw:?} has class digit {digit}, expected 1, 2 or 3")]
    UnknownClassDigit { raw: String, digit: char },
    #[error("no prefix in the grammar table for issuer {issuer} / {kind:?}")]
    NoCanonicalPrefix { issuer: String, kind: ApprovalKind },
    #[error("field out of range: {0}")]
    OutOfRange(&'static str),
}

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("table line {line}: {message}")]
    Table { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApprovalKind {
    Domestic,
    Imported,
    Sar,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Issuer {
    National,
    Province(String),
}

impl fmt::Display for Issuer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issuer::National => f.write_str("National"),
            Issuer::Province(p) => f.write_str(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Origin {
    Domestic(Issuer),
    Imported,
    Sar,
}

impl Origin {
    /// Coarse label used as a cross-tab dimension value.
    pub fn kind_label(&self) -> &'static str {
        match self {
            Origin::Domestic(_) => "Domestic",
            Origin::Imported => "Imported",
            Origin::Sar => "SAR",
        }
    }

    pub fn approval_kind(&self) -> ApprovalKind {
        match self {
            Origin::Domestic(_) => ApprovalKind::Domestic,
            Origin::Imported => ApprovalKind::Imported,
            Origin::Sar => ApprovalKind::Sar,
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Domestic(i) => write!(f, "Domestic({i})"),
            Origin::Imported => f.write_str("Imported"),
            Origin::Sar => f.write_str("SAR"),
        }
    }
}

/// A decoded certificate number.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RegistrationNumber {
    pub origin: Origin,
    pub year: u16,
    pub device_class: DeviceClass,
    pub category: u8,
    pub serial: u32,
    pub raw: String,
}

impl RegistrationNumber {
    /// Builds a number whose `raw` is the canonical spelling under `grammar`.
    pub fn new(
        grammar: &RegistrationGrammar,
        origin: Origin,
        year: u16,
        device_class: DeviceClass,
        category: u8,
        serial: u32,
    ) -> Result<Self, RegistrationError> {
        if !(1980..=2100).contains(&year) {
            return Err(RegistrationError::OutOfRange("year"));
        }
        if category > 99 {
            return Err(RegistrationError::OutOfRange("category"));
        }
        let mut r = RegistrationNumber {
            origin,
            year,
            device_class,
            category,
            serial,
            raw: String::new(),
        };
        r.raw = grammar.format(&r)?;
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct PrefixEntry {
    prefix: String,
    issuer: Option<Issuer>,
    kind: ApprovalKind,
    region_code: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    Province,
    Sar,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub code: String,
    pub name: String,
    pub chinese_name: String,
    pub kind: RegionKind,
}

/// Prefix table plus region table.
#[derive(Debug, Clone)]
pub struct RegistrationGrammar {
    /// Longest prefix first.
    by_length: Vec<PrefixEntry>,
    /// Table order, used to pick canonical prefixes.
    in_order: Vec<PrefixEntry>,
    regions: Vec<Region>,
}

pub fn default_grammar() -> &'static RegistrationGrammar {
    static GRAMMAR: OnceLock<RegistrationGrammar> = OnceLock::new();
    GRAMMAR.get_or_init(|| {
        RegistrationGrammar::from_tables(DEFAULT_PREFIX_TABLE, DEFAULT_REGION_TABLE)
            .expect("bundled registration tables are valid")
    })
}

fn tsv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .comment(Some(b'#'))
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes())
}

fn dash_none(s: &str) -> Option<&str> {
    let s = s.trim();
    if s.is_empty() || s == "-" { None } else { Some(s) }
}

impl RegistrationGrammar {
    pub fn from_tables(prefix_table: &str, region_table: &str) -> Result<Self, GrammarError> {
        let mut in_order = Vec::new();
        let mut rdr = tsv_reader(prefix_table);
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let err = |message: String| GrammarError::Table { line, message };
            if row.len() != 4 {
                return Err(err(format!("expected 4 columns, found {}", row.len())));
            }
            let prefix = row[0].trim().to_string();
            if prefix.is_empty() {
                return Err(err("empty prefix".into()));
            }
            let kind = match row[2].trim() {
                "domestic" => ApprovalKind::Domestic,
                "imported" => ApprovalKind::Imported,
                "sar" => ApprovalKind::Sar,
                other => return Err(err(format!("unknown approval kind {other:?}"))),
            };
            let issuer = match (dash_none(&row[1]), kind) {
                (Some("National"), ApprovalKind::Domestic) => Some(Issuer::National),
                (Some(p), ApprovalKind::Domestic) => Some(Issuer::Province(p.to_string())),
                (None, ApprovalKind::Domestic) => return Err(err("domestic row needs an issuer".into())),
                (_, _) => None,
            };
            in_order.push(PrefixEntry {
                prefix,
                issuer,
                kind,
                region_code: dash_none(&row[3]).map(str::to_string),
            });
        }
        let mut regions = Vec::new();
        let mut rdr = tsv_reader(region_table);
        for row in rdr.records() {
            let row = row?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            if row.len() != 4 {
                return Err(GrammarError::Table {
                    line,
                    message: "expected 4 columns".into(),
                });
            }
            let kind = match row[3].trim() {
                "province" => RegionKind::Province,
                "sar" => RegionKind::Sar,
                other => {
                    return Err(GrammarError::Table {
                        line,
                        message: format!("unknown region kind {other:?}"),
                    });
                }
            };
            regions.push(Region {
                code: row[0].trim().to_string(),
                name: row[1].trim().to_string(),
                chinese_name: row[2].trim().to_string(),
                kind,
            });
        }
        let mut by_length = in_order.clone();
        by_length.sort_by_key(|p| std::cmp::Reverse(p.prefix.len()));
        Ok(RegistrationGrammar {
            by_length,
            in_order,
            regions,
        })
    }

    fn match_prefix<'a>(&self, raw: &'a str) -> Option<(&PrefixEntry, &'a str)> {
        self.by_length.iter().find_map(|e| {
            let head = raw.get(..e.prefix.len())?;
            head.eq_ignore_ascii_case(&e.prefix)
                .then(|| (e, &raw[e.prefix.len()..]))
        })
    }

    /// Decodes a certificate number. Surrounding whitespace and a trailing
    /// `号` are ignored.
    pub fn parse(&self, raw: &str) -> Result<RegistrationNumber, RegistrationError> {
        let malformed = |reason| RegistrationError::MalformedRegistration {
            raw: raw.to_string(),
            reason,
        };
        let trimmed = raw.trim();
        let trimmed = trimmed.strip_suffix('号').unwrap_or(trimmed).trim_end();
        if trimmed.is_empty() {
            return Err(malformed("empty"));
        }
        let (entry, body) = self.match_prefix(trimmed).ok_or_else(|| malformed("unknown prefix"))?;
        let digits = body.as_bytes();
        if !digits.iter().all(u8::is_ascii_digit) {
            return Err(malformed("body is not all digits"));
        }
        if digits.len() < 11 {
            return Err(malformed("body shorter than YYYY C NN SSSS"));
        }
        if digits.len() > 16 {
            return Err(malformed("serial longer than 9 digits"));
        }
        let num = |b: &[u8]| b.iter().fold(0u32, |acc, d| acc * 10 + u32::from(d - b'0'));
        let year = num(&digits[..4]) as u16;
        if !(1980..=2100).contains(&year) {
            return Err(malformed("year outside 1980..=2100"));
        }
        let device_class =
            DeviceClass::from_digit(digits[4] - b'0').ok_or_else(|| RegistrationError::UnknownClassDigit {
                raw: raw.to_string(),
                digit: digits[4] as char,
            })?;
        let category = num(&digits[5..7]) as u8;
        let serial = num(&digits[7..]);
        let origin = match entry.kind {
            ApprovalKind::Domestic => Origin::Domestic(entry.issuer.clone().expect("domestic rows carry an issuer")),
            ApprovalKind::Imported => Origin::Imported,
            ApprovalKind::Sar => Origin::Sar,
        };
        Ok(RegistrationNumber {
            origin,
            year,
            device_class,
            category,
            serial,
            raw: raw.to_string(),
        })
    }

    /// Canonical spelling: first table prefix for the origin, then the body
    /// with a serial of at least four digits.
    pub fn format(&self, r: &RegistrationNumber) -> Result<String, RegistrationError> {
        let kind = r.origin.approval_kind();
        let issuer = match &r.origin {
            Origin::Domestic(i) => Some(i),
            _ => None,
        };
        let entry = self
            .in_order
            .iter()
            .find(|e| e.kind == kind && e.issuer.as_ref() == issuer)
            .ok_or_else(|| RegistrationError::NoCanonicalPrefix {
                issuer: issuer.map(ToString::to_string).unwrap_or_else(|| "-".into()),
                kind,
            })?;
        Ok(format!(
            "{}{:04}{}{:02}{:04}",
            entry.prefix,
            r.year,
            r.device_class.digit(),
            r.category,
            r.serial
        ))
    }

    /// All domestic issuers in table order, without duplicates.
    pub fn domestic_issuers(&self) -> Vec<Issuer> {
        let mut out: Vec<Issuer> = Vec::new();
        for e in &self.in_order {
            if let Some(i) = &e.issuer
                && !out.contains(i)
            {
                out.push(i.clone());
            }
        }
        out
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    /// Region code for a domestic issuer, `national`, or `xu` for SARs.
    pub fn region_code(&self, origin: &Origin) -> Option<String> {
        match origin {
            Origin::Imported => None,
            _ => self
                .in_order
                .iter()
                .find(|e| {
                    e.kind == origin.approval_kind()
                        && match origin {
                            Origin::Domestic(i) => e.issuer.as_ref() == Some(i),
                            _ => true,
                        }
                })
                .and_then(|e| e.region_code.clone())
                .or_else(|| match origin {
                    Origin::Domestic(Issuer::Province(p)) => {
                        self.regions.iter().find(|r| &r.name == p).map(|r| r.code.clone())
                    }
                    _ => None,
                }),
        }
    }

    /// Heuristic origin from free-text region: the first region whose
    /// English or Chinese name occurs in the text.
    pub fn origin_from_region(&self, region_raw: &str) -> Option<Origin> {
        let text = fold(region_raw);
        if text.trim().is_empty() {
            return None;
        }
        let mut best: Option<(&Region, usize)> = None;
        for r in &self.regions {
            for name in [fold(&r.name), fold(&r.chinese_name)] {
                if !name.is_empty() && text.contains(&name) && best.is_none_or(|(_, l)| name.len() > l) {
                    best = Some((r, name.len()));
                }
            }
        }
        best.map(|(r, _)| match r.kind {
            RegionKind::Province => Origin::Domestic(Issuer::Province(r.name.clone())),
            RegionKind::Sar => Origin::Sar,
        })
    }
}

/// Parses with the bundled grammar.
pub fn parse_registration_number(raw: &str) -> Result<RegistrationNumber, RegistrationError> {
    default_grammar().parse(raw)
}
