//! Reference evaluator: walks the uncompiled spec for one record using plain
//! substring search on fully folded text. Used by `verify` and by tests to
//! check the compiled pipeline.

use std::collections::{BTreeMap, BTreeSet};

use super::pipeline::{Evidence, MatchResult};
use super::spec::{ALL, PipelineSpec, Rule, TermLexicon};
use crate::record::DeviceRecord;
use crate::regnum::RegistrationGrammar;
use crate::text::fold;

pub struct NaiveOracle<'a> {
    spec: &'a PipelineSpec,
    lexicon: &'a TermLexicon,
    grammar: &'a RegistrationGrammar,
}

fn field_text<'r>(record: &'r DeviceRecord, name: &str) -> Option<&'r str> {
    Some(match name {
        "record_id" => record.record_id(),
        "product_name" => record.product_name(),
        "generic_name" => record.generic_name(),
        "description" => record.description(),
        "classification_code_raw" => record.classification_code_raw(),
        "registration_number_raw" => record.registration_number_raw(),
        "manufacturer" => record.manufacturer(),
        "region_raw" => record.region_raw(),
        _ => return None,
    })
}

/// Leading segments of a `NN-NN-NN` code, or `None` if malformed.
fn code_segments(raw: &str) -> Option<Vec<u8>> {
    let parts: Vec<&str> = raw.trim().split('-').collect();
    if parts.is_empty() || parts.len() > 3 {
        return None;
    }
    parts
        .iter()
        .map(|p| {
            if p.len() == 2 && p.chars().all(|c| c.is_ascii_digit()) {
                p.parse::<u8>().ok()
            } else {
                None
            }
        })
        .collect()
}

impl<'a> NaiveOracle<'a> {
    pub fn new(spec: &'a PipelineSpec, lexicon: &'a TermLexicon, grammar: &'a RegistrationGrammar) -> Self {
        NaiveOracle { spec, lexicon, grammar }
    }

    /// Names of every stage the record belongs to.
    pub fn stages(&self, record: &DeviceRecord) -> BTreeSet<String> {
        let mut memo = BTreeMap::new();
        self.spec
            .stages
            .iter()
            .filter(|s| self.stage_holds(&s.name, record, &mut memo))
            .map(|s| s.name.clone())
            .collect()
    }

    fn stage_holds<'s>(&'s self, name: &'s str, record: &DeviceRecord, memo: &mut BTreeMap<&'s str, bool>) -> bool {
        if let Some(&v) = memo.get(name) {
            return v;
        }
        let stage = self.spec.stage(name).expect("oracle runs on compiled specs");
        let holds = (stage.source == ALL || self.stage_holds(&stage.source, record, memo))
            && self.rule_holds(&stage.include, record, memo)
            && !stage
                .exclude
                .as_ref()
                .is_some_and(|ex| self.rule_holds(ex, record, memo));
        memo.insert(name, holds);
        holds
    }

    fn rule_holds<'s>(&'s self, rule: &'s Rule, record: &DeviceRecord, memo: &mut BTreeMap<&'s str, bool>) -> bool {
        match rule {
            Rule::KeywordAny { fields, terms } => fields.iter().any(|f| {
                let text = fold(field_text(record, f).unwrap_or_default());
                terms
                    .iter()
                    .flat_map(|t| self.lexicon.expand(t))
                    .any(|s| text.contains(&fold(&s)))
            }),
            Rule::CodePrefix(prefix) => {
                code_segments(record.classification_code_raw()).is_some_and(|segs| segs.starts_with(prefix))
            }
            Rule::RegCategoryIs(cat) => self
                .grammar
                .parse(record.registration_number_raw())
                .is_ok_and(|r| r.category == *cat),
            Rule::InStage(s) => self.stage_holds(s, record, memo),
            Rule::Not(r) => !self.rule_holds(r, record, memo),
            Rule::And(rs) => rs.iter().all(|r| self.rule_holds(r, record, memo)),
            Rule::Or(rs) => rs.iter().any(|r| self.rule_holds(r, record, memo)),
        }
    }

    /// Re-checks one evidence item against the record on its own.
    pub fn recheck(&self, record: &DeviceRecord, result: &MatchResult, evidence: &Evidence) -> bool {
        match evidence {
            Evidence::InStage { stage } => result.in_stage(stage),
            Evidence::Keyword { field, term, surface } => {
                self.lexicon.expand(term).iter().any(|s| fold(s) == fold(surface))
                    && fold(record.get(*field)).contains(&fold(surface))
            }
            Evidence::CodePrefix { prefix, code } => {
                code_segments(record.classification_code_raw()).is_some_and(|s| s.starts_with(prefix))
                    && code_segments(code) == code_segments(record.classification_code_raw())
            }
            Evidence::RegCategory { category, registration } => {
                registration == record.registration_number_raw()
                    && self.grammar.parse(registration).is_ok_and(|r| r.category == *category)
            }
            Evidence::Absent { rule } => {
                let mut memo = BTreeMap::new();
                !self.rule_holds(rule, record, &mut memo)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn code_segments_mirror_the_code_grammar() {
        assert_eq!(code_segments("21-01-01"), Some(vec![21, 1, 1]));
        assert_eq!(code_segments(" 06 "), Some(vec![6]));
        assert_eq!(code_segments("2A-01"), None);
        assert_eq!(code_segments("21-01-01-01"), None);
        assert_eq!(code_segments(""), None);
    }
}
