//! Multi-pattern keyword matching over folded text.

use std::collections::BTreeSet;

use aho_corasick::{AhoCorasick, AhoCorasickBuilder, MatchKind};

use super::FilterError;
use crate::text::fold;

/// One Aho-Corasick automaton over a set of folded surface forms.
///
/// Haystacks must be canonical (NFKC) text lowered with
/// [`crate::text::lowercase_for_match`]; remaining ASCII case differences
/// are absorbed by the automaton.
#[derive(Debug, Clone)]
pub struct KeywordMatcher {
    automaton: AhoCorasick,
    surfaces: Vec<String>,
}

impl KeywordMatcher {
    /// Folds and deduplicates `surfaces`; pattern ids index the result of
    /// [`KeywordMatcher::surfaces`].
    pub fn new<S: AsRef<str>>(surfaces: impl IntoIterator<Item = S>) -> Result<Self, FilterError> {
        let mut folded: Vec<String> = Vec::new();
        for s in surfaces {
            let f = fold(s.as_ref());
            if f.is_empty() {
                return Err(FilterError::Spec("empty keyword surface form".into()));
            }
            if !folded.contains(&f) {
                folded.push(f);
            }
        }
        if folded.is_empty() {
            return Err(FilterError::Spec("keyword matcher needs at least one term".into()));
        }
        let automaton = AhoCorasickBuilder::new()
            .match_kind(MatchKind::Standard)
            .ascii_case_insensitive(true)
            .build(&folded)
            .map_err(|e| FilterError::Spec(format!("keyword automaton: {e}")))?;
        Ok(KeywordMatcher {
            automaton,
            surfaces: folded,
        })
    }

    pub fn surfaces(&self) -> &[String] {
        &self.surfaces
    }

    pub fn is_match(&self, lowered: &str) -> bool {
        self.automaton.is_match(lowered)
    }

    /// Ids of every surface form occurring anywhere in the text.
    pub fn hits(&self, lowered: &str) -> BTreeSet<usize> {
        self.automaton
            .find_overlapping_iter(lowered)
            .map(|m| m.pattern().as_usize())
            .collect()
    }
}
