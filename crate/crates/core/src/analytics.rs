//! Deterministic counts over annotated devices: cross-tabs, one-dimension
//! distributions with explicit denominators, and the regional rollup.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::AnnotatedDevice;
use crate::regnum::{Issuer, Origin, RegistrationGrammar};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalyticsError {
    #[error("unknown dimension {0:?}")]
    UnknownDimension(String),
    #[error("label groups line {line}: {reason}")]
    LabelGroups { line: u64, reason: String },
}

/// Values that mean "no label" and stay out of percentage denominators.
pub const UNLABELED_VALUES: [&str; 4] = ["Unknown", "Undetermined", "Uncategorized", "NotApplicable"];

pub fn is_unlabeled(value: &str) -> bool {
    UNLABELED_VALUES.contains(&value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Origin,
    SoftwareKind,
    AiFlag,
    DeviceClass,
    Technique,
    Specialty,
    FunctionCategory,
    FunctionSubtype,
    Pathway,
}

impl Dimension {
    pub const ALL: [Dimension; 9] = [
        Dimension::Origin,
        Dimension::SoftwareKind,
        Dimension::AiFlag,
        Dimension::DeviceClass,
        Dimension::Technique,
        Dimension::Specialty,
        Dimension::FunctionCategory,
        Dimension::FunctionSubtype,
        Dimension::Pathway,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Origin => "origin",
            Dimension::SoftwareKind => "software_kind",
            Dimension::AiFlag => "ai_flag",
            Dimension::DeviceClass => "device_class",
            Dimension::Technique => "technique",
            Dimension::Specialty => "specialty",
            Dimension::FunctionCategory => "function_category",
            Dimension::FunctionSubtype => "function_subtype",
            Dimension::Pathway => "pathway",
        }
    }

    pub fn value(self, d: &AnnotatedDevice) -> String {
        match self {
            Dimension::Origin => d.origin.as_ref().map_or("Undetermined", Origin::kind_label).to_string(),
            Dimension::SoftwareKind => d.software_kind.to_string(),
            Dimension::AiFlag => if d.ai_flag { "AI" } else { "Non-AI" }.to_string(),
            Dimension::DeviceClass => d.device_class.map_or("Unknown", |c| c.as_str()).to_string(),
            Dimension::Technique => d.technique.to_string(),
            Dimension::Specialty => d.specialty.clone(),
            Dimension::FunctionCategory => d.function.category().to_string(),
            Dimension::FunctionSubtype => d.function.subtype().map_or("NotApplicable", |s| s.as_str()).to_string(),
            Dimension::Pathway => d.pathway.to_string(),
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, AnalyticsError> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s.trim())
            .ok_or_else(|| AnalyticsError::UnknownDimension(s.to_string()))
    }
}

/// Report-time merges of atomic labels, e.g. two specialties reported
/// jointly.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelGroups {
    groups: BTreeMap<(Dimension, String), String>,
}

pub const BUNDLED_LABEL_GROUPS_TSV: &str = include_str!("../../../assets/paper_default/label_groups.tsv");

impl LabelGroups {
    pub fn bundled() -> Self {
        Self::from_tsv(BUNDLED_LABEL_GROUPS_TSV).expect("bundled label groups are valid")
    }

    /// Tab-separated `dimension, label, group` with a header.
    pub fn from_tsv(text: &str) -> Result<Self, AnalyticsError> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .comment(Some(b'#'))
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut groups = BTreeMap::new();
        for row in rdr.records() {
            let row = row.map_err(|e| AnalyticsError::LabelGroups {
                line: 0,
                reason: e.to_string(),
            })?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            let err = |reason: String| AnalyticsError::LabelGroups { line, reason };
            if row.len() != 3 {
                return Err(err("expected dimension, label, group".into()));
            }
            let dim: Dimension = row[0].parse().map_err(|e: AnalyticsError| err(e.to_string()))?;
            let (label, group) = (row[1].trim().to_string(), row[2].trim().to_string());
            if label.is_empty() || group.is_empty() {
                return Err(err("empty label or group".into()));
            }
            if groups.insert((dim, label.clone()), group).is_some() {
                return Err(err(format!("label {label:?} grouped twice")));
            }
        }
        Ok(LabelGroups { groups })
    }

    pub fn apply(&self, dim: Dimension, value: String) -> String {
        self.groups.get(&(dim, value.clone())).cloned().unwrap_or(value)
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CrossCell {
    pub values: Vec<String>,
    pub count: u64,
}

/// Counts per combination of dimension values. Cells are in
/// lexicographic order of their value tuples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossTab {
    pub dims: Vec<String>,
    pub cells: Vec<CrossCell>,
    pub total: u64,
}

impl CrossTab {
    fn from_map(dims: Vec<String>, map: BTreeMap<Vec<String>, u64>) -> Self {
        let total = map.values().sum();
        CrossTab {
            dims,
            cells: map
                .into_iter()
                .map(|(values, count)| CrossCell { values, count })
                .collect(),
            total,
        }
    }

    pub fn get(&self, values: &[&str]) -> u64 {
        self.cells
            .iter()
            .find(|c| c.values.iter().map(String::as_str).eq(values.iter().copied()))
            .map_or(0, |c| c.count)
    }

    /// Sums out `dim`.
    pub fn marginalize(&self, dim: &str) -> Result<CrossTab, AnalyticsError> {
        let at = self
            .dims
            .iter()
            .position(|d| d == dim)
            .ok_or_else(|| AnalyticsError::UnknownDimension(dim.into()))?;
        let mut map: BTreeMap<Vec<String>, u64> = BTreeMap::new();
        for c in &self.cells {
            let mut key = c.values.clone();
            key.remove(at);
            *map.entry(key).or_default() += c.count;
        }
        let mut dims = self.dims.clone();
        dims.remove(at);
        Ok(CrossTab::from_map(dims, map))
    }

    /// Cell-wise sum of two tabs over the same dimensions.
    pub fn merge(&self, other: &CrossTab) -> Option<CrossTab> {
        if self.dims != other.dims {
            return None;
        }
        let mut map: BTreeMap<Vec<String>, u64> = BTreeMap::new();
        for c in self.cells.iter().chain(&other.cells) {
            *map.entry(c.values.clone()).or_default() += c.count;
        }
        Some(CrossTab::from_map(self.dims.clone(), map))
    }
}

pub fn parse_dims(names: &[&str]) -> Result<Vec<Dimension>, AnalyticsError> {
    names.iter().map(|n| n.parse()).collect()
}

/// Counts `devices` by the named dimensions.
pub fn crosstab(devices: &[AnnotatedDevice], dims: &[&str]) -> Result<CrossTab, AnalyticsError> {
    Ok(crosstab_by(devices, &parse_dims(dims)?, &LabelGroups::default()))
}

pub fn crosstab_by(devices: &[AnnotatedDevice], dims: &[Dimension], groups: &LabelGroups) -> CrossTab {
    let mut map: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    for d in devices {
        let key = dims.iter().map(|dim| groups.apply(*dim, dim.value(d))).collect();
        *map.entry(key).or_default() += 1;
    }
    CrossTab::from_map(dims.iter().map(|d| d.as_str().to_string()).collect(), map)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistEntry {
    pub value: String,
    pub count: u64,
    /// Share of the denominator in tenths of a percent, rounded half up.
    pub percent_tenths: u64,
}

impl DistEntry {
    /// One-decimal percentage text, e.g. `74.4`.
    pub fn percent(&self) -> String {
        format_tenths(self.percent_tenths)
    }
}

pub fn format_tenths(t: u64) -> String {
    format!("{}.{}", t / 10, t % 10)
}

/// `count / denominator` in tenths of a percent, half up.
pub fn percent_tenths(count: u64, denominator: u64) -> u64 {
    if denominator == 0 {
        return 0;
    }
    (2000 * count + denominator) / (2 * denominator)
}

/// Labelled values with their shares; unlabelled devices are counted
/// separately and excluded from the denominator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Distribution {
    pub dimension: String,
    pub denominator: u64,
    pub unlabeled: u64,
    pub entries: Vec<DistEntry>,
}

pub fn distribution(devices: &[AnnotatedDevice], dim: Dimension, groups: &LabelGroups) -> Distribution {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut unlabeled = 0;
    for d in devices {
        let v = dim.value(d);
        if is_unlabeled(&v) {
            unlabeled += 1;
        } else {
            *counts.entry(groups.apply(dim, v)).or_default() += 1;
        }
    }
    distribution_from_counts(dim.as_str(), counts, unlabeled)
}

/// Builds a distribution from precomputed labelled counts.
pub fn distribution_from_counts(dimension: &str, counts: BTreeMap<String, u64>, unlabeled: u64) -> Distribution {
    let denominator: u64 = counts.values().sum();
    let mut entries: Vec<DistEntry> = counts
        .into_iter()
        .map(|(value, count)| DistEntry {
            percent_tenths: percent_tenths(count, denominator),
            value,
            count,
        })
        .collect();
    entries.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.value.cmp(&b.value)));
    Distribution {
        dimension: dimension.to_string(),
        denominator,
        unlabeled,
        entries,
    }
}

pub const NATIONAL_BUCKET: &str = "national";

/// Non-imported devices by issuing region.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeoRollup {
    /// Province codes and the SAR marker.
    pub regions: BTreeMap<String, u64>,
    /// Domestic devices registered at national level (Class III).
    pub national_class3_bucket: u64,
    /// Devices whose origin or region cannot be resolved.
    pub undetermined: u64,
    /// All devices that are not imported.
    pub total: u64,
}

/// Domestic national registrations go to the national bucket, provincial
/// ones to their province, SAR registrations to the SAR marker; imported
/// devices are left out.
pub fn geo_rollup(devices: &[AnnotatedDevice], grammar: &RegistrationGrammar) -> GeoRollup {
    let mut g = GeoRollup::default();
    for d in devices {
        match &d.origin {
            Some(Origin::Imported) => continue,
            Some(Origin::Domestic(Issuer::National)) => g.national_class3_bucket += 1,
            Some(origin) => match grammar.region_code(origin) {
                Some(code) if code != NATIONAL_BUCKET => *g.regions.entry(code).or_default() += 1,
                Some(_) => g.national_class3_bucket += 1,
                None => g.undetermined += 1,
            },
            None => g.undetermined += 1,
        }
        g.total += 1;
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_up_rounding() {
        assert_eq!(format_tenths(percent_tenths(32, 43)), "74.4");
        assert_eq!(format_tenths(percent_tenths(11, 43)), "25.6");
        assert_eq!(format_tenths(percent_tenths(8, 39)), "20.5");
        assert_eq!(format_tenths(percent_tenths(5, 39)), "12.8");
        assert_eq!(format_tenths(percent_tenths(4, 39)), "10.3");
        assert_eq!(format_tenths(percent_tenths(1, 1)), "100.0");
        // 1/8 = 12.5 exactly; 1/16 = 6.25 rounds up to 6.3.
        assert_eq!(format_tenths(percent_tenths(1, 16)), "6.3");
        assert_eq!(percent_tenths(0, 0), 0);
    }

    #[test]
    fn dimension_names_round_trip() {
        for d in Dimension::ALL {
            assert_eq!(d.as_str().parse::<Dimension>().unwrap(), d);
        }
        assert!(matches!(
            "colour".parse::<Dimension>(),
            Err(AnalyticsError::UnknownDimension(_))
        ));
    }

    #[test]
    fn label_groups_merge() {
        let g = LabelGroups::bundled();
        assert_eq!(
            g.apply(Dimension::Specialty, "Endocrinology".into()),
            "Ophthalmology/Endocrinology"
        );
        assert_eq!(g.apply(Dimension::Specialty, "Respiratory".into()), "Respiratory");
        assert!(LabelGroups::from_tsv("dimension\tlabel\tgroup\ncolour\ta\tb\n").is_err());
    }
}
