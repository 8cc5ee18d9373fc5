//! Manual annotations keyed by registration number, record id or product
//! name.

use serde::{Deserialize, Serialize};

use super::{AnnotateError, AnnotatedDevice, AuditEntry, FunctionLabel, Pathway, Technique};
use crate::text::fold;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SidecarField {
    Pathway,
    Specialty,
    Technique,
    Function,
}

impl SidecarField {
    pub fn as_str(self) -> &'static str {
        match self {
            SidecarField::Pathway => "pathway",
            SidecarField::Specialty => "specialty",
            SidecarField::Technique => "technique",
            SidecarField::Function => "function",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SidecarEntry {
    pub line: u64,
    pub key: String,
    pub field: SidecarField,
    pub value: String,
    pub note: String,
}

const PRODUCT_PREFIX: &str = "product:";

impl SidecarEntry {
    fn applies_to(&self, d: &AnnotatedDevice) -> bool {
        match self.key.strip_prefix(PRODUCT_PREFIX) {
            Some(name) => fold(name.trim()) == fold(d.record.product_name().trim()),
            None => self.key == d.review_key() || self.key == d.record.record_id(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Sidecar {
    pub entries: Vec<SidecarEntry>,
}

impl Sidecar {
    /// Tab-separated `key, field, value, note` with a header; `#` comments.
    /// Values are checked against the field's label set.
    pub fn from_tsv(text: &str) -> Result<Self, AnnotateError> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .comment(Some(b'#'))
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut entries = Vec::new();
        for row in rdr.records() {
            let row = row.map_err(|e| AnnotateError::Sidecar {
                line: 0,
                reason: e.to_string(),
            })?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let err = |reason: String| AnnotateError::Sidecar { line, reason };
            if row.len() < 3 {
                return Err(err("expected key, field, value and an optional note".into()));
            }
            let key = crate::text::canonicalize(row[0].trim()).into_owned();
            let value = row[2].trim().to_string();
            let field = match row[1].trim() {
                "pathway" => SidecarField::Pathway,
                "specialty" => SidecarField::Specialty,
                "technique" => SidecarField::Technique,
                "function" => SidecarField::Function,
                other => return Err(err(format!("unknown field {other:?}"))),
            };
            let valid = match field {
                SidecarField::Pathway => value.parse::<Pathway>().map(|_| ()),
                SidecarField::Technique => value.parse::<Technique>().map(|_| ()),
                SidecarField::Function => value.parse::<FunctionLabel>().map(|_| ()),
                SidecarField::Specialty => {
                    if value.is_empty() {
                        Err("empty specialty".into())
                    } else {
                        Ok(())
                    }
                }
            };
            valid.map_err(err)?;
            if key.is_empty() {
                return Err(err("empty key".into()));
            }
            let note = row.get(3).unwrap_or_default().trim().to_string();
            entries.push(SidecarEntry {
                line,
                key,
                field,
                value,
                note,
            });
        }
        Ok(Sidecar { entries })
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A sidecar entry that matched no device. Reported, not fatal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StaleSidecarKey {
    pub line: u64,
    pub key: String,
    pub field: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarOutcome {
    pub audit: Vec<AuditEntry>,
    pub stale: Vec<StaleSidecarKey>,
    /// Overrides refused because they would give an AI device the NotAI
    /// technique.
    pub rejected: Vec<AuditEntry>,
}

/// Applies entries in file order; later entries win. Every applied change
/// is audited with `source = "sidecar"`.
pub fn apply_sidecar(devices: &mut [AnnotatedDevice], sidecar: &Sidecar) -> SidecarOutcome {
    let mut out = SidecarOutcome::default();
    for e in &sidecar.entries {
        let mut hit = false;
        for d in devices.iter_mut().filter(|d| e.applies_to(d)) {
            hit = true;
            let old = match e.field {
                SidecarField::Pathway => d.pathway.to_string(),
                SidecarField::Specialty => d.specialty.clone(),
                SidecarField::Technique => d.technique.to_string(),
                SidecarField::Function => d.function.to_string(),
            };
            let entry = AuditEntry {
                source: "sidecar".into(),
                key: e.key.clone(),
                record_id: d.record.record_id().to_string(),
                field: e.field.as_str().into(),
                old,
                new: e.value.clone(),
                note: e.note.clone(),
            };
            match e.field {
                SidecarField::Pathway => d.pathway = e.value.parse().expect("validated on load"),
                SidecarField::Specialty => d.specialty = e.value.clone(),
                SidecarField::Technique => {
                    let t: Technique = e.value.parse().expect("validated on load");
                    if d.ai_flag && t == Technique::NotAI {
                        out.rejected.push(entry);
                        continue;
                    }
                    d.technique = t;
                }
                SidecarField::Function => d.function = e.value.parse().expect("validated on load"),
            }
            out.audit.push(entry);
        }
        if !hit {
            out.stale.push(StaleSidecarKey {
                line: e.line,
                key: e.key.clone(),
                field: e.field.as_str().into(),
            });
        }
    }
    out
}
