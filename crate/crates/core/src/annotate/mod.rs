//! Analytical labels for medical-device software: software kind, AI
//! technique, specialty, function category and approval pathway.
//!
//! Labels come from data lexicons matched the same way as pipeline
//! keywords (NFKC, case-insensitive substring), plus an optional sidecar of
//! manual annotations.

mod lexicon;
mod sidecar;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lexicon::{LexEntry, Lexicon};
pub use sidecar::{Sidecar, SidecarEntry, SidecarField, SidecarOutcome, StaleSidecarKey, apply_sidecar};

use crate::filter::{MatchResult, Roles, Survivor};
use crate::record::{DeviceClass, DeviceRecord, origin_with};
use crate::regnum::{Origin, RegistrationGrammar};

pub const BUNDLED_TECHNIQUE_TSV: &str = include_str!("../../../../assets/paper_default/technique.tsv");
pub const BUNDLED_SPECIALTY_TSV: &str = include_str!("../../../../assets/paper_default/specialty.tsv");
pub const BUNDLED_FUNCTION_TSV: &str = include_str!("../../../../assets/paper_default/function.tsv");
pub const BUNDLED_SIDECAR_TSV: &str = include_str!("../../../../assets/paper_default/sidecar.tsv");

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnnotateError {
    #[error("{name} lexicon line {line}: {reason}")]
    Lexicon { name: String, line: u64, reason: String },
    #[error("sidecar line {line}: {reason}")]
    Sidecar { line: u64, reason: String },
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

macro_rules! label_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
                    .ok_or_else(|| format!("unknown {} {s:?}", stringify!($name)))
            }
        }
    };
}

label_enum!(SoftwareKind { SaMD => "SaMD", SiMD => "SiMD" });
label_enum!(Technique { DeepLearning => "DeepLearning", TraditionalAI => "TraditionalAI", NotAI => "NotAI" });
label_enum!(FunctionCategory {
    DecisionSupport => "DecisionSupport",
    ImageDataProcessing => "ImageDataProcessing",
    AnalysisDataMining => "AnalysisDataMining",
    MedicalAssistant => "MedicalAssistant",
    Uncategorized => "Uncategorized",
});
label_enum!(DecisionSubtype {
    AuxDetection => "AuxDetection",
    AuxDiagnosis => "AuxDiagnosis",
    ClinicalTriage => "ClinicalTriage",
    AuxEvaluation => "AuxEvaluation",
    SurgicalPlanning => "SurgicalPlanning",
});
label_enum!(Pathway {
    Standard => "Standard",
    Innovation => "Innovation",
    Priority => "Priority",
    Emergency => "Emergency",
    Unknown => "Unknown",
});

pub const UNKNOWN_SPECIALTY: &str = "Unknown";

/// Function category with its decision-support subtype. The subtype is
/// present exactly when the category is `DecisionSupport`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FunctionLabel {
    category: FunctionCategory,
    subtype: Option<DecisionSubtype>,
}

impl FunctionLabel {
    pub const UNCATEGORIZED: FunctionLabel = FunctionLabel {
        category: FunctionCategory::Uncategorized,
        subtype: None,
    };

    pub fn new(category: FunctionCategory, subtype: Option<DecisionSubtype>) -> Option<Self> {
        ((category == FunctionCategory::DecisionSupport) == subtype.is_some())
            .then_some(FunctionLabel { category, subtype })
    }

    pub fn decision_support(subtype: DecisionSubtype) -> Self {
        FunctionLabel {
            category: FunctionCategory::DecisionSupport,
            subtype: Some(subtype),
        }
    }

    pub fn category(self) -> FunctionCategory {
        self.category
    }

    pub fn subtype(self) -> Option<DecisionSubtype> {
        self.subtype
    }
}

impl fmt::Display for FunctionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.subtype {
            Some(s) => write!(f, "{}:{}", self.category, s),
            None => write!(f, "{}", self.category),
        }
    }
}

impl FromStr for FunctionLabel {
    type Err = String;

    /// `Category` or `DecisionSupport:Subtype`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (cat, sub) = match s.split_once(':') {
            Some((c, t)) => (c.parse::<FunctionCategory>()?, Some(t.parse::<DecisionSubtype>()?)),
            None => (s.parse::<FunctionCategory>()?, None),
        };
        FunctionLabel::new(cat, sub).ok_or_else(|| format!("{s:?}: a subtype goes with DecisionSupport only"))
    }
}

/// The three label lexicons.
#[derive(Debug, Clone, PartialEq)]
pub struct Lexicons {
    pub technique: Lexicon,
    pub specialty: Lexicon,
    pub function: Lexicon,
}

impl Lexicons {
    pub fn bundled() -> Self {
        Self::from_texts(BUNDLED_TECHNIQUE_TSV, BUNDLED_SPECIALTY_TSV, BUNDLED_FUNCTION_TSV)
            .expect("bundled lexicons are valid")
    }

    pub fn from_texts(technique: &str, specialty: &str, function: &str) -> Result<Self, AnnotateError> {
        let technique = Lexicon::from_tsv("technique", technique)?;
        for (i, e) in technique.entries().iter().enumerate() {
            match e.label.parse::<Technique>() {
                Ok(Technique::NotAI) | Err(_) => {
                    return Err(AnnotateError::Lexicon {
                        name: "technique".into(),
                        line: i as u64 + 1,
                        reason: format!("label {:?} is not DeepLearning or TraditionalAI", e.label),
                    });
                }
                Ok(_) => {}
            }
        }
        let function = Lexicon::from_tsv("function", function)?;
        for (i, e) in function.entries().iter().enumerate() {
            e.label
                .parse::<FunctionLabel>()
                .map_err(|reason| AnnotateError::Lexicon {
                    name: "function".into(),
                    line: i as u64 + 1,
                    reason,
                })?;
        }
        Ok(Lexicons {
            technique,
            specialty: Lexicon::from_tsv("specialty", specialty)?,
            function,
        })
    }

    /// Reads `technique.tsv`, `specialty.tsv` and `function.tsv` from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, AnnotateError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|e| AnnotateError::Io {
                path: path.display().to_string(),
                reason: e.to_string(),
            })
        };
        Self::from_texts(&read("technique.tsv")?, &read("specialty.tsv")?, &read("function.tsv")?)
    }
}

/// DeepLearning if any deep-learning surface occurs, else TraditionalAI if
/// any general AI surface occurs, else NotAI.
pub fn classify_technique(description: &str, lexicon: &Lexicon) -> Technique {
    let mut found = Technique::NotAI;
    for i in lexicon.matches(description) {
        match lexicon.entry(i).label.parse() {
            Ok(Technique::DeepLearning) => return Technique::DeepLearning,
            Ok(Technique::TraditionalAI) => found = Technique::TraditionalAI,
            _ => {}
        }
    }
    found
}

/// The label of the longest matching surface; ties go to the higher
/// priority, then the smaller label. No match gives `Unknown`.
pub fn extract_specialty(generic_name: &str, lexicon: &Lexicon) -> String {
    lexicon
        .matches(generic_name)
        .into_iter()
        .min_by(|&a, &b| {
            let (ea, eb) = (lexicon.entry(a), lexicon.entry(b));
            lexicon
                .surface_len(b)
                .cmp(&lexicon.surface_len(a))
                .then(eb.priority.cmp(&ea.priority))
                .then(ea.label.cmp(&eb.label))
        })
        .map(|i| lexicon.entry(i).label.clone())
        .unwrap_or_else(|| UNKNOWN_SPECIALTY.to_string())
}

/// Highest priority match over name and description, then the longest
/// surface, then the smaller label.
pub fn classify_function(name: &str, description: &str, lexicon: &Lexicon) -> FunctionLabel {
    let mut best: Option<(i32, usize, &str)> = None;
    for text in [name, description] {
        for i in lexicon.matches(text) {
            let e = lexicon.entry(i);
            let cand = (e.priority, lexicon.surface_len(i), e.label.as_str());
            let better = match best {
                None => true,
                Some((p, l, lab)) => cand.0 > p || (cand.0 == p && (cand.1 > l || (cand.1 == l && cand.2 < lab))),
            };
            if better {
                best = Some(cand);
            }
        }
    }
    best.and_then(|(_, _, label)| label.parse().ok())
        .unwrap_or(FunctionLabel::UNCATEGORIZED)
}

/// A software device with every analytical label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedDevice {
    pub record: Arc<DeviceRecord>,
    pub result: Arc<MatchResult>,
    pub software_kind: SoftwareKind,
    /// Member of the AI candidate stage.
    pub ai_candidate: bool,
    /// AI-enabled: a candidate that survived the exclusion list.
    pub ai_flag: bool,
    pub technique: Technique,
    pub specialty: String,
    pub function: FunctionLabel,
    pub pathway: Pathway,
    /// `None` when neither the registration number nor the region says.
    pub origin: Option<Origin>,
    pub device_class: Option<DeviceClass>,
}

impl AnnotatedDevice {
    pub fn review_key(&self) -> &str {
        &self.result.review_key
    }
}

/// One label change with its source.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AuditEntry {
    pub source: String,
    pub key: String,
    pub record_id: String,
    pub field: String,
    pub old: String,
    pub new: String,
    pub note: String,
}

/// Labels software survivors of a pipeline run.
#[derive(Debug, Clone)]
pub struct Annotator {
    lexicons: Arc<Lexicons>,
    grammar: Arc<RegistrationGrammar>,
    samd_stage: Option<String>,
    mdsw_stage: Option<String>,
    candidate_stage: Option<String>,
}

impl Annotator {
    pub fn new(lexicons: Arc<Lexicons>, grammar: Arc<RegistrationGrammar>, roles: &Roles) -> Self {
        Annotator {
            lexicons,
            grammar,
            samd_stage: roles.samd.clone(),
            mdsw_stage: roles.mdsw.clone(),
            candidate_stage: roles.ai_candidates.clone(),
        }
    }

    pub fn lexicons(&self) -> &Lexicons {
        &self.lexicons
    }

    fn in_role(result: &MatchResult, stage: &Option<String>) -> bool {
        stage.as_deref().is_some_and(|s| result.in_stage(s))
    }

    /// Whether a survivor is medical-device software under the roles.
    pub fn is_software(&self, result: &MatchResult) -> bool {
        Self::in_role(result, &self.mdsw_stage)
    }

    /// Annotates one software survivor. `removed` holds the review keys the
    /// exclusion list dropped. A candidate without any technique term is
    /// labelled TraditionalAI and the promotion is audited.
    pub fn annotate(&self, survivor: &Survivor, removed: &BTreeSet<String>) -> (AnnotatedDevice, Option<AuditEntry>) {
        let record = &survivor.record;
        let result = &survivor.result;
        let ai_candidate = Self::in_role(result, &self.candidate_stage);
        let ai_flag = ai_candidate && !removed.contains(&result.review_key);
        let software_kind = if Self::in_role(result, &self.samd_stage) {
            SoftwareKind::SaMD
        } else {
            SoftwareKind::SiMD
        };
        let mut technique = classify_technique(record.description(), &self.lexicons.technique);
        let mut audit = None;
        if ai_flag && technique == Technique::NotAI {
            technique = Technique::TraditionalAI;
            audit = Some(AuditEntry {
                source: "rule".into(),
                key: result.review_key.clone(),
                record_id: result.record_id.clone(),
                field: "technique".into(),
                old: Technique::NotAI.to_string(),
                new: technique.to_string(),
                note: "AI device without a technique term in the description".into(),
            });
        }
        let name = format!("{} {}", record.generic_name(), record.product_name());
        let resolved = origin_with(record, &self.grammar).ok();
        let device = AnnotatedDevice {
            record: survivor.record.clone(),
            result: survivor.result.clone(),
            software_kind,
            ai_candidate,
            ai_flag,
            technique,
            specialty: extract_specialty(record.generic_name(), &self.lexicons.specialty),
            function: classify_function(&name, record.description(), &self.lexicons.function),
            pathway: Pathway::Unknown,
            device_class: resolved
                .as_ref()
                .and_then(|r| r.registration.as_ref())
                .map(|r| r.device_class),
            origin: resolved.map(|r| r.origin),
        };
        (device, audit)
    }

    /// Annotates every software survivor, in survivor order.
    pub fn annotate_all<'a>(
        &self,
        survivors: impl IntoIterator<Item = &'a Survivor>,
        removed: &BTreeSet<String>,
    ) -> (Vec<AnnotatedDevice>, Vec<AuditEntry>) {
        let mut devices = Vec::new();
        let mut audit = Vec::new();
        for s in survivors {
            if !self.is_software(&s.result) {
                continue;
            }
            let (d, a) = self.annotate(s, removed);
            devices.push(d);
            audit.extend(a);
        }
        (devices, audit)
    }
}
