//! UDI parsing: device identifier (DI) and production identifier (PI).
//!
//! GS1 element strings are accepted in the parenthesized human-readable form
//! `(01)…(10)…` and in the machine form where variable-length fields are
//! terminated by ASCII 29 (FNC1). A bare 14-digit string is taken as a GS1 DI.
//! Other agencies are matched by a leading literal from the agency table and
//! kept as validated opaque payloads.

use std::fmt;
use std::sync::OnceLock;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_GS1_PREFIX_TABLE: &str = include_str!("../../../assets/paper_default/udi_gs1_prefix_lengths.tsv");
pub const DEFAULT_AGENCY_TABLE: &str = include_str!("../../../assets/paper_default/udi_agencies.tsv");

const GS: char = '\u{1d}';
const MAX_VARIABLE_LEN: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UdiError {
    #[error("empty UDI")]
    EmptyInput,
    #[error("GS1 device identifier {0:?} fails the mod-10 check digit")]
    BadCheckDigit(String),
    #[error("application identifier ({ai}) carries {value:?}, not a valid YYMMDD date")]
    BadDate { ai: &'static str, value: String },
    #[error("expected exactly 14 ASCII digits, got {0:?}")]
    NotFourteenDigits(String),
    #[error("unsupported application identifier at {0:?}")]
    UnknownApplicationIdentifier(String),
    #[error("application identifier ({0}) appears twice")]
    DuplicateApplicationIdentifier(&'static str),
    #[error("element string has no (01) device identifier")]
    MissingDeviceIdentifier,
    #[error("malformed element string: {0}")]
    Malformed(String),
}

#[derive(Debug, Error)]
pub enum UdiTableError {
    #[error("table line {line}: {message}")]
    Table { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Agency {
    #[serde(rename = "GS1")]
    Gs1,
    #[serde(rename = "MA")]
    Ma,
    #[serde(rename = "AHM")]
    Ahm,
    OtherOpaque,
}

impl Agency {
    fn from_table_name(name: &str) -> Agency {
        match name {
            "GS1" => Agency::Gs1,
            "MA" => Agency::Ma,
            "AHM" => Agency::Ahm,
            _ => Agency::OtherOpaque,
        }
    }
}

impl fmt::Display for Agency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Agency::Gs1 => "GS1",
            Agency::Ma => "MA",
            Agency::Ahm => "AHM",
            Agency::OtherOpaque => "OtherOpaque",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeviceIdentifier {
    pub agency: Agency,
    pub part1: String,
    pub part2: String,
    pub canonical: String,
}

/// Calendar date from AI 11/17. `month_precision` marks a `00` day, which
/// resolves to the last day of the month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UdiDate {
    pub date: NaiveDate,
    pub month_precision: bool,
}

impl UdiDate {
    fn to_yymmdd(self) -> String {
        let day = if self.month_precision { 0 } else { self.date.day() };
        format!("{:02}{:02}{:02}", self.date.year() % 100, self.date.month(), day)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProductionIdentifier {
    pub lot: Option<String>,
    pub serial: Option<String>,
    pub production_date: Option<UdiDate>,
    pub expiry_date: Option<UdiDate>,
}

impl ProductionIdentifier {
    pub fn is_empty(&self) -> bool {
        self.lot.is_none() && self.serial.is_none() && self.production_date.is_none() && self.expiry_date.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UdiCode {
    pub di: DeviceIdentifier,
    pub pi: ProductionIdentifier,
}

impl UdiCode {
    /// Canonical text: the parenthesized element string for GS1 (AIs in the
    /// order 01, 11, 17, 10, 21), the DI text otherwise.
    pub fn to_element_string(&self) -> String {
        if self.di.agency != Agency::Gs1 {
            return self.di.canonical.clone();
        }
        let mut s = format!("(01){}", self.di.canonical);
        if let Some(d) = self.pi.production_date {
            s.push_str(&format!("(11){}", d.to_yymmdd()));
        }
        if let Some(d) = self.pi.expiry_date {
            s.push_str(&format!("(17){}", d.to_yymmdd()));
        }
        if let Some(lot) = &self.pi.lot {
            s.push_str(&format!("(10){lot}"));
        }
        if let Some(serial) = &self.pi.serial {
            s.push_str(&format!("(21){serial}"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct AgencyRule {
    agency: Agency,
    literal: String,
    delimiter: char,
    occurrence: usize,
}

/// Prefix-length and agency-delimiter tables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UdiTables {
    default_prefix_len: usize,
    /// Longest GS1 prefix first.
    prefix_lengths: Vec<(String, usize)>,
    agencies: Vec<AgencyRule>,
}

fn tsv(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

impl UdiTables {
    pub fn from_tables(prefix_table: &str, agency_table: &str) -> Result<Self, UdiTableError> {
        let mut default_prefix_len = 7;
        let mut prefix_lengths = Vec::new();
        for row in tsv(prefix_table).records() {
            let row = row?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let len: usize = row
                .get(1)
                .and_then(|v| v.trim().parse().ok())
                .filter(|&l| (1..=12).contains(&l))
                .ok_or_else(|| UdiTableError::Table {
                    line,
                    message: "company_prefix_length must be 1..=12".into(),
                })?;
            match row.get(0).map(str::trim) {
                Some("default") => default_prefix_len = len,
                Some(p) if !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit()) => {
                    prefix_lengths.push((p.to_string(), len))
                }
                _ => {
                    return Err(UdiTableError::Table {
                        line,
                        message: "gs1_prefix must be digits or `default`".into(),
                    });
                }
            }
        }
        prefix_lengths.sort_by_key(|p| std::cmp::Reverse(p.0.len()));
        let mut agencies = Vec::new();
        for row in tsv(agency_table).records() {
            let row = row?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let bad = |message: &str| UdiTableError::Table {
                line,
                message: message.into(),
            };
            if row.len() != 4 {
                return Err(bad("expected 4 columns"));
            }
            let mut delim = row[2].chars();
            let delimiter = match (delim.next(), delim.next()) {
                (Some(c), None) => c,
                _ => return Err(bad("delimiter must be one character")),
            };
            let occurrence = row[3]
                .trim()
                .parse()
                .ok()
                .filter(|&n: &usize| n >= 1)
                .ok_or_else(|| bad("split_occurrence must be >= 1"))?;
            let literal = row[1].trim().to_string();
            if literal.is_empty() {
                return Err(bad("empty leading_literal"));
            }
            agencies.push(AgencyRule {
                agency: Agency::from_table_name(row[0].trim()),
                literal,
                delimiter,
                occurrence,
            });
        }
        agencies.sort_by_key(|a| std::cmp::Reverse(a.literal.len()));
        Ok(UdiTables {
            default_prefix_len,
            prefix_lengths,
            agencies,
        })
    }

    fn company_prefix_len(&self, gtin: &str) -> usize {
        let after_indicator = &gtin[1..];
        self.prefix_lengths
            .iter()
            .find(|(p, _)| after_indicator.starts_with(p.as_str()))
            .map(|&(_, l)| l)
            .unwrap_or(self.default_prefix_len)
    }
}

pub fn default_tables() -> &'static UdiTables {
    static TABLES: OnceLock<UdiTables> = OnceLock::new();
    TABLES.get_or_init(|| {
        UdiTables::from_tables(DEFAULT_GS1_PREFIX_TABLE, DEFAULT_AGENCY_TABLE).expect("bundled UDI tables are valid")
    })
}

/// Mod-10 check digit for the first 13 digits of a GTIN-14.
fn gs1_check_digit(first13: &[u8]) -> u8 {
    let sum: u32 = first13
        .iter()
        .rev()
        .enumerate()
        .map(|(i, &d)| u32::from(d - b'0') * if i % 2 == 0 { 3 } else { 1 })
        .sum();
    ((10 - sum % 10) % 10) as u8
}

/// Appends the mod-10 check digit to a 13-digit payload.
pub fn complete_gtin14(first13: &str) -> Result<String, UdiError> {
    let bytes = first13.as_bytes();
    if bytes.len() != 13 || !bytes.iter().all(u8::is_ascii_digit) {
        return Err(UdiError::NotFourteenDigits(first13.to_string()));
    }
    Ok(format!("{first13}{}", gs1_check_digit(bytes)))
}

/// True iff the 14th digit is the mod-10 check digit of the first 13.
pub fn validate_gtin14_check(payload: &str) -> Result<bool, UdiError> {
    let bytes = payload.as_bytes();
    if bytes.len() != 14 || !bytes.iter().all(u8::is_ascii_digit) {
        return Err(UdiError::NotFourteenDigits(payload.to_string()));
    }
    Ok(gs1_check_digit(&bytes[..13]) == bytes[13] - b'0')
}

/// Splits a DI into agency-assigned part I and manufacturer part II.
/// `part1 + part2 == canonical` for every agency.
pub fn split_di_parts(di: &DeviceIdentifier) -> (String, String) {
    split_with(&di.agency, &di.canonical, default_tables())
}

fn split_with(agency: &Agency, canonical: &str, tables: &UdiTables) -> (String, String) {
    match agency {
        Agency::Gs1 if canonical.len() == 14 && canonical.is_ascii() => {
            let cut = (1 + tables.company_prefix_len(canonical)).min(canonical.len());
            (canonical[..cut].to_string(), canonical[cut..].to_string())
        }
        Agency::OtherOpaque | Agency::Gs1 => (String::new(), canonical.to_string()),
        other => {
            let rule = tables
                .agencies
                .iter()
                .find(|r| &r.agency == other && canonical.starts_with(&r.literal));
            let Some(rule) = rule else {
                return (String::new(), canonical.to_string());
            };
            match canonical.match_indices(rule.delimiter).nth(rule.occurrence - 1) {
                Some((at, _)) => (canonical[..at].to_string(), canonical[at..].to_string()),
                None => (canonical.to_string(), String::new()),
            }
        }
    }
}

/// Parses with the bundled tables.
pub fn parse_udi(raw: &str) -> Result<UdiCode, UdiError> {
    UdiParser::new(default_tables()).parse(raw)
}

#[derive(Debug, Clone, Copy)]
pub struct UdiParser<'t> {
    tables: &'t UdiTables,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Ai {
    Gtin,
    Lot,
    ProductionDate,
    ExpiryDate,
    Serial,
}

impl Ai {
    fn code(self) -> &'static str {
        match self {
            Ai::Gtin => "01",
            Ai::Lot => "10",
            Ai::ProductionDate => "11",
            Ai::ExpiryDate => "17",
            Ai::Serial => "21",
        }
    }

    fn from_code(code: &str) -> Option<Ai> {
        Some(match code {
            "01" => Ai::Gtin,
            "10" => Ai::Lot,
            "11" => Ai::ProductionDate,
            "17" => Ai::ExpiryDate,
            "21" => Ai::Serial,
            _ => return None,
        })
    }

    fn fixed_len(self) -> Option<usize> {
        match self {
            Ai::Gtin => Some(14),
            Ai::ProductionDate | Ai::ExpiryDate => Some(6),
            Ai::Lot | Ai::Serial => None,
        }
    }
}

impl<'t> UdiParser<'t> {
    pub fn new(tables: &'t UdiTables) -> Self {
        UdiParser { tables }
    }

    pub fn parse(&self, raw: &str) -> Result<UdiCode, UdiError> {
        let s = raw.trim_matches(|c: char| c.is_whitespace());
        if s.is_empty() {
            return Err(UdiError::EmptyInput);
        }
        let s = ["]C1", "]d2", "]Q3", "]e0"]
            .iter()
            .find_map(|p| s.strip_prefix(p))
            .unwrap_or(s);
        let elements = if s.starts_with('(') {
            Some(parse_parenthesized(s)?)
        } else if s.len() == 14 && s.bytes().all(|b| b.is_ascii_digit()) {
            Some(vec![(Ai::Gtin, s.to_string())])
        } else if s.starts_with(GS)
            || (s.starts_with("01") && s.len() >= 16 && s.as_bytes()[2..16].iter().all(u8::is_ascii_digit))
        {
            Some(parse_machine(s.trim_start_matches(GS))?)
        } else {
            None
        };
        match elements {
            Some(elements) => self.build_gs1(elements),
            None => Ok(self.build_opaque(s)),
        }
    }

    fn build_gs1(&self, elements: Vec<(Ai, String)>) -> Result<UdiCode, UdiError> {
        let mut gtin = None;
        let mut pi = ProductionIdentifier::default();
        for (ai, value) in elements {
            let dup = UdiError::DuplicateApplicationIdentifier(ai.code());
            match ai {
                Ai::Gtin => {
                    if gtin.replace(value).is_some() {
                        return Err(dup);
                    }
                }
                Ai::Lot => {
                    if pi.lot.replace(value).is_some() {
                        return Err(dup);
                    }
                }
                Ai::Serial => {
                    if pi.serial.replace(value).is_some() {
                        return Err(dup);
                    }
                }
                Ai::ProductionDate => {
                    if pi.production_date.replace(parse_yymmdd("11", &value)?).is_some() {
                        return Err(dup);
                    }
                }
                Ai::ExpiryDate => {
                    if pi.expiry_date.replace(parse_yymmdd("17", &value)?).is_some() {
                        return Err(dup);
                    }
                }
            }
        }
        let gtin = gtin.ok_or(UdiError::MissingDeviceIdentifier)?;
        if !validate_gtin14_check(&gtin)? {
            return Err(UdiError::BadCheckDigit(gtin));
        }
        let (part1, part2) = split_with(&Agency::Gs1, &gtin, self.tables);
        Ok(UdiCode {
            di: DeviceIdentifier {
                agency: Agency::Gs1,
                part1,
                part2,
                canonical: gtin,
            },
            pi,
        })
    }

    fn build_opaque(&self, s: &str) -> UdiCode {
        let agency = self
            .tables
            .agencies
            .iter()
            .find(|r| s.starts_with(&r.literal) && s.len() > r.literal.len() && is_opaque_payload(s))
            .map(|r| r.agency.clone())
            .unwrap_or(Agency::OtherOpaque);
        let (part1, part2) = split_with(&agency, s, self.tables);
        UdiCode {
            di: DeviceIdentifier {
                agency,
                part1,
                part2,
                canonical: s.to_string(),
            },
            pi: ProductionIdentifier::default(),
        }
    }
}

fn is_opaque_payload(s: &str) -> bool {
    s.chars()
        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_' | '/'))
}

fn check_variable(ai: Ai, value: &str) -> Result<(), UdiError> {
    if value.is_empty() || value.len() > MAX_VARIABLE_LEN {
        return Err(UdiError::Malformed(format!(
            "({}) must hold 1..=20 characters",
            ai.code()
        )));
    }
    if !value.bytes().all(|b| b.is_ascii_graphic()) {
        return Err(UdiError::Malformed(format!(
            "({}) holds non-printable characters",
            ai.code()
        )));
    }
    Ok(())
}

fn check_fixed(ai: Ai, value: &str, len: usize) -> Result<(), UdiError> {
    if value.len() != len || !value.bytes().all(|b| b.is_ascii_digit()) {
        if ai == Ai::Gtin {
            return Err(UdiError::NotFourteenDigits(value.to_string()));
        }
        if ai == Ai::ProductionDate || ai == Ai::ExpiryDate {
            return Err(UdiError::BadDate {
                ai: ai.code(),
                value: value.to_string(),
            });
        }
        return Err(UdiError::Malformed(format!("({}) must be {len} digits", ai.code())));
    }
    Ok(())
}

fn parse_parenthesized(s: &str) -> Result<Vec<(Ai, String)>, UdiError> {
    let mut out = Vec::new();
    let mut rest = s;
    while !rest.is_empty() {
        let inner = rest
            .strip_prefix('(')
            .ok_or_else(|| UdiError::Malformed(format!("expected '(' at {rest:?}")))?;
        let close = inner
            .find(')')
            .ok_or_else(|| UdiError::Malformed("unclosed '('".into()))?;
        let code = &inner[..close];
        let ai = Ai::from_code(code).ok_or_else(|| UdiError::UnknownApplicationIdentifier(code.to_string()))?;
        let after = &inner[close + 1..];
        let end = after.find('(').unwrap_or(after.len());
        let value = &after[..end];
        match ai.fixed_len() {
            Some(len) => check_fixed(ai, value, len)?,
            None => check_variable(ai, value)?,
        }
        out.push((ai, value.to_string()));
        rest = &after[end..];
    }
    Ok(out)
}

fn parse_machine(s: &str) -> Result<Vec<(Ai, String)>, UdiError> {
    let mut out = Vec::new();
    let mut rest = s;
    while !rest.is_empty() {
        let code = rest
            .get(..2)
            .ok_or_else(|| UdiError::Malformed(format!("truncated AI at {rest:?}")))?;
        let ai = Ai::from_code(code).ok_or_else(|| UdiError::UnknownApplicationIdentifier(rest.to_string()))?;
        let body = &rest[2..];
        let (value, next) = match ai.fixed_len() {
            Some(len) => {
                let value = body.get(..len).unwrap_or(body);
                check_fixed(ai, value, len)?;
                (value, &body[value.len()..])
            }
            None => {
                let end = body.find(GS).unwrap_or(body.len());
                let value = &body[..end];
                check_variable(ai, value)?;
                (value, &body[end..])
            }
        };
        out.push((ai, value.to_string()));
        rest = next.trim_start_matches(GS);
    }
    Ok(out)
}

/// YYMMDD with a fixed century pivot: 00–50 are 2000s, 51–99 are 1900s.
/// Day 00 means month precision and resolves to the month's last day.
fn parse_yymmdd(ai: &'static str, value: &str) -> Result<UdiDate, UdiError> {
    let bad = || UdiError::BadDate {
        ai,
        value: value.to_string(),
    };
    let b = value.as_bytes();
    if b.len() != 6 || !b.iter().all(u8::is_ascii_digit) {
        return Err(bad());
    }
    let two = |i: usize| u32::from(b[i] - b'0') * 10 + u32::from(b[i + 1] - b'0');
    let (yy, month, day) = (two(0), two(2), two(4));
    let year = if yy <= 50 { 2000 + yy } else { 1900 + yy } as i32;
    if day == 0 {
        let first_of_next = if month == 12 {
            NaiveDate::from_ymd_opt(year + 1, 1, 1)
        } else {
            NaiveDate::from_ymd_opt(year, month + 1, 1)
        };
        let date = NaiveDate::from_ymd_opt(year, month, 1)
            .and(first_of_next)
            .and_then(|d| d.pred_opt())
            .ok_or_else(bad)?;
        return Ok(UdiDate {
            date,
            month_precision: true,
        });
    }
    let date = NaiveDate::from_ymd_opt(year, month, day).ok_or_else(bad)?;
    Ok(UdiDate {
        date,
        month_precision: false,
    })
}
