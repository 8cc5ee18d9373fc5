//! Field-to-column bindings.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::record::Field;

pub const DEFAULT_SCHEMA_JSON: &str = include_str!("../../../../assets/paper_default/schema_2024.json");

/// Binds record fields to dump column headers by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaMap {
    bindings: BTreeMap<Field, String>,
    required: BTreeSet<Field>,
    /// Full column layout of the release, used when writing dump-shaped
    /// archives. Not needed for reading.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    columns: Vec<String>,
    /// Single ASCII delimiter overriding the ingest default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delimiter: Option<char>,
}

impl SchemaMap {
    pub fn new(bindings: BTreeMap<Field, String>, required: BTreeSet<Field>) -> Result<Self, IngestError> {
        let map = SchemaMap {
            bindings,
            required,
            columns: Vec::new(),
            delimiter: None,
        };
        map.validate()?;
        Ok(map)
    }

    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        let map: SchemaMap = serde_json::from_str(text).map_err(|e| IngestError::Schema(e.to_string()))?;
        map.validate()?;
        Ok(map)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    /// Binding for the 2024 full-release headers.
    pub fn default_2024() -> Self {
        SchemaMap::from_json(DEFAULT_SCHEMA_JSON).expect("bundled schema is valid")
    }

    fn validate(&self) -> Result<(), IngestError> {
        if !self.bindings.contains_key(&Field::RecordId) {
            return Err(IngestError::Schema("record_id must be bound".into()));
        }
        for f in &self.required {
            if !self.bindings.contains_key(f) {
                return Err(IngestError::Schema(format!("required field {f} is not bound")));
            }
        }
        let mut seen = BTreeMap::new();
        for (f, col) in &self.bindings {
            if col.trim().is_empty() {
                return Err(IngestError::Schema(format!("field {f} bound to an empty header")));
            }
            if let Some(other) = seen.insert(col.as_str(), *f) {
                return Err(IngestError::Schema(format!(
                    "fields {other} and {f} both bound to column {col:?}"
                )));
            }
        }
        if let Some(d) = self.delimiter
            && (!d.is_ascii() || d == '"' || d == '\n' || d == '\r')
        {
            return Err(IngestError::Schema(format!("unusable delimiter {d:?}")));
        }
        for col in self.bindings.values() {
            if !self.columns.is_empty() && !self.columns.contains(col) {
                return Err(IngestError::Schema(format!(
                    "bound column {col:?} missing from the column layout"
                )));
            }
        }
        Ok(())
    }

    pub fn bindings(&self) -> &BTreeMap<Field, String> {
        &self.bindings
    }

    pub fn column_for(&self, field: Field) -> Option<&str> {
        self.bindings.get(&field).map(String::as_str)
    }

    pub fn required(&self) -> &BTreeSet<Field> {
        &self.required
    }

    /// The full column layout; when none is configured, the bound columns
    /// in field order.
    pub fn columns(&self) -> Vec<String> {
        if self.columns.is_empty() {
            Field::ALL
                .iter()
                .filter_map(|f| self.bindings.get(f).cloned())
                .collect()
        } else {
            self.columns.clone()
        }
    }

    pub fn delimiter(&self) -> Option<u8> {
        self.delimiter.map(|c| c as u8)
    }

    pub fn with_delimiter(mut self, delimiter: u8) -> Self {
        self.delimiter = Some(delimiter as char);
        self
    }

    /// Required fields whose column is absent from `header`.
    pub fn missing_in(&self, header: &[String]) -> Vec<String> {
        self.required
            .iter()
            .filter_map(|f| {
                let col = &self.bindings[f];
                (!header.iter().any(|h| h == col)).then(|| format!("{f} ({col})"))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_schema_binds_named_fields() {
        let s = SchemaMap::default_2024();
        assert_eq!(s.columns().len(), 48);
        assert_eq!(s.column_for(Field::RecordId), Some("ZXXSDYCPBS"));
        assert!(s.column_for(Field::RegionRaw).is_none());
        let back = SchemaMap::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_shared_column_and_unbound_required() {
        let mut b = BTreeMap::new();
        b.insert(Field::RecordId, "A".to_string());
        b.insert(Field::Description, "A".to_string());
        assert!(SchemaMap::new(b.clone(), BTreeSet::new()).is_err());
        b.insert(Field::Description, "B".to_string());
        assert!(SchemaMap::new(b.clone(), BTreeSet::from([Field::GenericName])).is_err());
        assert!(SchemaMap::new(b, BTreeSet::from([Field::Description])).is_ok());
    }
}
