//! Pipeline spec documents and keyword lexicons.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::FilterError;
use crate::text::fold;

pub const BUNDLED_PIPELINE_JSON: &str = include_str!("../../../../assets/paper_default/pipeline.json");
pub const BUNDLED_KEYWORDS_TSV: &str = include_str!("../../../../assets/paper_default/keywords.tsv");

/// Source name meaning "every record in the stream".
pub const ALL: &str = "ALL";

/// A rule tree. Serialized externally tagged, e.g.
/// `{"keyword_any": {"fields": [...], "terms": [...]}}` or `{"code_prefix": [21]}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    KeywordAny { fields: Vec<String>, terms: Vec<String> },
    CodePrefix(Vec<u8>),
    RegCategoryIs(u8),
    InStage(String),
    Not(Box<Rule>),
    And(Vec<Rule>),
    Or(Vec<Rule>),
}

impl Rule {
    pub fn negate(rule: Rule) -> Rule {
        Rule::Not(Box::new(rule))
    }

    pub fn keyword_any<F: Into<String>, T: Into<String>>(
        fields: impl IntoIterator<Item = F>,
        terms: impl IntoIterator<Item = T>,
    ) -> Rule {
        Rule::KeywordAny {
            fields: fields.into_iter().map(Into::into).collect(),
            terms: terms.into_iter().map(Into::into).collect(),
        }
    }

    /// Stage names referenced through `in_stage`.
    pub fn stage_refs<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Rule::InStage(s) => out.push(s),
            Rule::Not(r) => r.stage_refs(out),
            Rule::And(rs) | Rule::Or(rs) => rs.iter().for_each(|r| r.stage_refs(out)),
            Rule::KeywordAny { .. } | Rule::CodePrefix(_) | Rule::RegCategoryIs(_) => {}
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, op: &str, rs: &[Rule]| {
            write!(f, "{op}(")?;
            for (i, r) in rs.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{r}")?;
            }
            f.write_str(")")
        };
        match self {
            Rule::KeywordAny { fields, terms } => {
                write!(f, "keyword_any[{}]({})", fields.join(","), terms.join(" | "))
            }
            Rule::CodePrefix(p) => {
                let p: Vec<String> = p.iter().map(|s| format!("{s:02}")).collect();
                write!(f, "code_prefix({})", p.join("-"))
            }
            Rule::RegCategoryIs(c) => write!(f, "reg_category_is({c:02})"),
            Rule::InStage(s) => write!(f, "in_stage({s})"),
            Rule::Not(r) => write!(f, "not({r})"),
            Rule::And(rs) => join(f, "and", rs),
            Rule::Or(rs) => join(f, "or", rs),
        }
    }
}

fn all_source() -> String {
    ALL.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub name: String,
    #[serde(default = "all_source")]
    pub source: String,
    pub include: Rule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclude: Option<Rule>,
}

/// Which stages play the analytical roles downstream modules need.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roles {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samd: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simd: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mdsw: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ai_candidates: Option<String>,
}

impl Roles {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &str)> {
        [
            ("samd", self.samd.as_deref()),
            ("simd", self.simd.as_deref()),
            ("mdsw", self.mdsw.as_deref()),
            ("ai_candidates", self.ai_candidates.as_deref()),
        ]
        .into_iter()
        .filter_map(|(role, stage)| stage.map(|s| (role, s)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// Also report per-stage counts of distinct device identifiers.
    #[serde(default)]
    pub dedup_by_di: bool,
    #[serde(default)]
    pub roles: Roles,
    pub stages: Vec<StageSpec>,
}

impl PipelineSpec {
    pub fn from_json(text: &str) -> Result<Self, FilterError> {
        serde_json::from_str(text).map_err(|e| FilterError::Spec(format!("pipeline document: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pipeline specs serialize")
    }

    pub fn stage(&self, name: &str) -> Option<&StageSpec> {
        self.stages.iter().find(|s| s.name == name)
    }
}

/// The bundled two-layer pipeline.
pub fn builtin_default_pipeline() -> PipelineSpec {
    PipelineSpec::from_json(BUNDLED_PIPELINE_JSON).expect("bundled pipeline parses")
}

/// Term → additional surface forms. Lookups are by folded term.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TermLexicon {
    forms: BTreeMap<String, BTreeSet<String>>,
}

impl TermLexicon {
    pub fn bundled() -> Self {
        Self::from_tsv(BUNDLED_KEYWORDS_TSV).expect("bundled keyword lexicon parses")
    }

    /// Tab-separated `term, surface` rows with a header; `#` starts a comment.
    pub fn from_tsv(text: &str) -> Result<Self, FilterError> {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut lex = TermLexicon::default();
        for row in rdr.records() {
            let row = row.map_err(|e| FilterError::Lexicon(e.to_string()))?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            if row.len() != 2 {
                return Err(FilterError::Lexicon(format!("line {line}: expected term and surface")));
            }
            let (term, surface) = (row[0].trim(), row[1].trim());
            if term.is_empty() || surface.is_empty() {
                return Err(FilterError::Lexicon(format!("line {line}: empty term or surface")));
            }
            lex.insert(term, surface);
        }
        Ok(lex)
    }

    pub fn insert(&mut self, term: &str, surface: &str) {
        self.forms.entry(fold(term)).or_default().insert(surface.to_string());
    }

    /// The term itself followed by its listed surface forms.
    pub fn expand(&self, term: &str) -> Vec<String> {
        let mut out = vec![term.to_string()];
        if let Some(forms) = self.forms.get(&fold(term)) {
            out.extend(forms.iter().cloned());
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("term\tsurface\n");
        for (term, forms) in &self.forms {
            for f in forms {
                s.push_str(&format!("{term}\t{f}\n"));
            }
        }
        s
    }
}
