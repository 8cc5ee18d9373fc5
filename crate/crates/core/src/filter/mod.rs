//! Declarative, provenance-tracking rule pipeline.
//!
//! A pipeline is an ordered list of named stages. Each stage draws from
//! `ALL` records or from an upstream stage, keeps records matching its
//! `include` rule and drops those matching its optional `exclude` rule.
//! Keyword rules match case-insensitively on NFKC text with substring
//! semantics; each term also matches its surface forms from a lexicon.

mod exclusion;
mod matcher;
pub mod naive;
mod pipeline;
mod run;
mod spec;

use thiserror::Error;

pub use exclusion::{ExclusionList, ExclusionOutcome, Removal, StaleEntry, apply_exclusions};
pub use matcher::KeywordMatcher;
pub use pipeline::{Evidence, MatchResult, RulePipeline};
pub use run::{PartialOutcome, PipelineOutcome, StageCount, Survivor, run_pipeline};
pub use spec::{
    ALL, BUNDLED_KEYWORDS_TSV, BUNDLED_PIPELINE_JSON, PipelineSpec, Roles, Rule, StageSpec, TermLexicon,
    builtin_default_pipeline,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FilterError {
    #[error("pipeline spec error: {0}")]
    Spec(String),
    #[error("keyword lexicon: {0}")]
    Lexicon(String),
    #[error("exclusion list: {0}")]
    Exclusions(String),
}

/// Compiles a spec document.
pub fn compile_pipeline(spec: &PipelineSpec, lexicon: &TermLexicon) -> Result<RulePipeline, FilterError> {
    RulePipeline::compile(spec, lexicon)
}
