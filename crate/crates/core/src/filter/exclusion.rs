//! Externalized manual-review removals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::FilterError;
use super::pipeline::MatchResult;
use crate::text::canonicalize;

/// Keys (registration number, else record id) with a removal reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionList {
    entries: BTreeMap<String, String>,
}

impl ExclusionList {
    /// Tab-separated `key, reason` rows with a header; `#` starts a comment.
    /// Duplicate keys are an error.
    pub fn from_tsv(text: &str) -> Result<Self, FilterError> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .comment(Some(b'#'))
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut list = ExclusionList::default();
        for row in rdr.records() {
            let row = row.map_err(|e| FilterError::Exclusions(e.to_string()))?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let key = row.get(0).map(str::trim).unwrap_or_default();
            if key.is_empty() {
                return Err(FilterError::Exclusions(format!("line {line}: empty key")));
            }
            let reason = row.get(1).map(str::trim).unwrap_or_default();
            list.insert(key, reason)
                .map_err(|k| FilterError::Exclusions(format!("line {line}: duplicate key {k:?}")))?;
        }
        Ok(list)
    }

    /// Adds an entry; returns the key back if it is already listed.
    pub fn insert(&mut self, key: &str, reason: &str) -> Result<(), String> {
        let key = canonicalize(key.trim()).into_owned();
        if self.entries.contains_key(&key) {
            return Err(key);
        }
        self.entries.insert(key, reason.to_string());
        Ok(())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key.trim())
    }

    pub fn reason(&self, key: &str) -> Option<&str> {
        self.entries.get(key.trim()).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("key\treason\n");
        for (k, r) in self.iter() {
            s.push_str(&format!("{k}\t{r}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Removal {
    pub key: String,
    pub reason: String,
    pub record_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StaleEntry {
    pub key: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionOutcome {
    pub kept: Vec<MatchResult>,
    pub removed: Vec<Removal>,
    pub stale: Vec<StaleEntry>,
}

/// Removes listed candidates. Listed keys that match no candidate are
/// reported as stale.
pub fn apply_exclusions<'a>(
    candidates: impl IntoIterator<Item = &'a MatchResult>,
    list: &ExclusionList,
) -> ExclusionOutcome {
    let mut kept = Vec::new();
    let mut removed: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for c in candidates {
        match list.entries.get_key_value(c.review_key.trim()) {
            Some((key, _)) => removed.entry(key.as_str()).or_default().push(c.record_id.clone()),
            None => kept.push(c.clone()),
        }
    }
    kept.sort();
    let stale = list
        .iter()
        .filter(|(k, _)| !removed.contains_key(k))
        .map(|(k, r)| StaleEntry {
            key: k.to_string(),
            reason: r.to_string(),
        })
        .collect();
    let removed = removed
        .into_iter()
        .map(|(key, mut record_ids)| {
            record_ids.sort();
            Removal {
                key: key.to_string(),
                reason: list.entries[key].clone(),
                record_ids,
            }
        })
        .collect();
    ExclusionOutcome { kept, removed, stale }
}
