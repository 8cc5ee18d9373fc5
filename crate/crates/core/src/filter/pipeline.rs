//! Compiled pipelines and per-record evaluation.

use std::borrow::Cow;
use std::cell::OnceCell;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::FilterError;
use super::matcher::KeywordMatcher;
use super::spec::{ALL, PipelineSpec, Rule, TermLexicon};
use crate::record::{ClassificationCode, DeviceRecord, Field, parse_classification_code};
use crate::regnum::{RegistrationGrammar, default_grammar};
use crate::text::lowercase_for_match;

/// Why a record belongs to a stage. Each item can be re-checked on its own.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Evidence {
    /// The record was a member of this upstream stage.
    InStage {
        stage: String,
    },
    /// `surface` (a form of `term`) occurs in `field`.
    Keyword {
        field: Field,
        term: String,
        surface: String,
    },
    CodePrefix {
        prefix: Vec<u8>,
        code: String,
    },
    RegCategory {
        category: u8,
        registration: String,
    },
    /// The rule evaluated to false for this record.
    Absent {
        rule: Rule,
    },
}

/// Stage memberships of one record with the evidence for each.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MatchResult {
    pub record_id: String,
    pub review_key: String,
    pub memberships: BTreeMap<String, Vec<Evidence>>,
}

impl MatchResult {
    pub fn in_stage(&self, stage: &str) -> bool {
        self.memberships.contains_key(stage)
    }
}

#[derive(Debug, Clone)]
enum CompiledRule {
    Keyword {
        matcher: usize,
        fields: Vec<Field>,
    },
    CodePrefix(Vec<u8>),
    RegCategory(u8),
    InStage(usize),
    /// Compiled operand plus the operand's source rule.
    Not(Box<CompiledRule>, Rule),
    And(Vec<CompiledRule>),
    Or(Vec<CompiledRule>),
}

#[derive(Debug, Clone)]
struct CompiledStage {
    name: Arc<str>,
    /// Index into spec order.
    index: usize,
    source: Option<usize>,
    include: CompiledRule,
    exclude: Option<(CompiledRule, Rule)>,
}

#[derive(Debug, Clone)]
struct CompiledKeywords {
    matcher: KeywordMatcher,
    /// Terms that produced each surface id.
    surface_terms: Vec<Vec<String>>,
}

/// A spec compiled into evaluation order with one automaton per
/// `keyword_any` rule.
#[derive(Debug, Clone)]
pub struct RulePipeline {
    spec: PipelineSpec,
    lexicon: TermLexicon,
    grammar: Arc<RegistrationGrammar>,
    /// Topological order.
    order: Vec<CompiledStage>,
    names: Vec<Arc<str>>,
    keywords: Vec<CompiledKeywords>,
}

impl RulePipeline {
    pub fn compile(spec: &PipelineSpec, lexicon: &TermLexicon) -> Result<Self, FilterError> {
        Self::compile_with(spec, lexicon, Arc::new(default_grammar().clone()))
    }

    pub fn compile_with(
        spec: &PipelineSpec,
        lexicon: &TermLexicon,
        grammar: Arc<RegistrationGrammar>,
    ) -> Result<Self, FilterError> {
        let names: Vec<Arc<str>> = spec.stages.iter().map(|s| Arc::from(s.name.as_str())).collect();
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        for (i, s) in spec.stages.iter().enumerate() {
            if s.name.is_empty() || s.name == ALL {
                return Err(FilterError::Spec(format!("invalid stage name {:?}", s.name)));
            }
            if index.insert(&s.name, i).is_some() {
                return Err(FilterError::Spec(format!("duplicate stage name {:?}", s.name)));
            }
        }
        let lookup = |stage: &str, reference: &str| {
            index
                .get(reference)
                .copied()
                .ok_or_else(|| FilterError::Spec(format!("stage {stage:?} refers to undefined stage {reference:?}")))
        };

        // Dependency edges: source plus every in_stage reference.
        let mut deps: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); spec.stages.len()];
        for (i, s) in spec.stages.iter().enumerate() {
            if s.source != ALL {
                deps[i].insert(lookup(&s.name, &s.source)?);
            }
            let mut refs = Vec::new();
            s.include.stage_refs(&mut refs);
            if let Some(ex) = &s.exclude {
                ex.stage_refs(&mut refs);
            }
            for r in refs {
                deps[i].insert(lookup(&s.name, r)?);
            }
        }
        let topo = topological_order(&deps).map_err(|stuck| {
            let names: Vec<&str> = stuck.iter().map(|&i| spec.stages[i].name.as_str()).collect();
            FilterError::Spec(format!("cyclic stage references among {names:?}"))
        })?;

        for (role, stage) in spec.roles.iter() {
            lookup(&format!("role {role}"), stage)?;
        }

        let mut keywords = Vec::new();
        let mut order = Vec::with_capacity(topo.len());
        for i in topo {
            let s = &spec.stages[i];
            let mut compiler = RuleCompiler {
                stage: &s.name,
                index: &index,
                lexicon,
                keywords: &mut keywords,
            };
            let include = compiler.compile(&s.include)?;
            let exclude = match &s.exclude {
                Some(rule) => Some((compiler.compile(rule)?, rule.clone())),
                None => None,
            };
            order.push(CompiledStage {
                name: names[i].clone(),
                index: i,
                source: (s.source != ALL).then(|| index[s.source.as_str()]),
                include,
                exclude,
            });
        }
        Ok(RulePipeline {
            spec: spec.clone(),
            lexicon: lexicon.clone(),
            grammar,
            order,
            names,
            keywords,
        })
    }

    pub fn spec(&self) -> &PipelineSpec {
        &self.spec
    }

    pub fn lexicon(&self) -> &TermLexicon {
        &self.lexicon
    }

    pub fn grammar(&self) -> &RegistrationGrammar {
        &self.grammar
    }

    /// Stage names in spec order.
    pub fn stage_names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(|n| &**n)
    }

    pub fn stage_count(&self) -> usize {
        self.names.len()
    }

    /// Every surface form compiled for `keyword_any` rules, in compile order.
    pub fn compiled_surfaces(&self) -> Vec<&[String]> {
        self.keywords.iter().map(|k| k.matcher.surfaces()).collect()
    }

    /// Membership flags in spec order. Cheap path used for every record.
    pub fn memberships(&self, record: &DeviceRecord) -> Vec<bool> {
        let ctx = Ctx::new(record, &self.grammar);
        let mut member = vec![false; self.names.len()];
        for stage in &self.order {
            member[stage.index] = self.stage_holds(stage, &ctx, &member);
        }
        member
    }

    fn stage_holds(&self, stage: &CompiledStage, ctx: &Ctx<'_>, member: &[bool]) -> bool {
        if let Some(src) = stage.source
            && !member[src]
        {
            return false;
        }
        if !self.eval(&stage.include, ctx, member) {
            return false;
        }
        match &stage.exclude {
            Some((rule, _)) => !self.eval(rule, ctx, member),
            None => true,
        }
    }

    fn eval(&self, rule: &CompiledRule, ctx: &Ctx<'_>, member: &[bool]) -> bool {
        match rule {
            CompiledRule::Keyword { matcher, fields } => {
                let m = &self.keywords[*matcher].matcher;
                fields.iter().any(|&f| m.is_match(ctx.lowered(f)))
            }
            CompiledRule::CodePrefix(prefix) => ctx.code().is_some_and(|c| c.starts_with(prefix)),
            CompiledRule::RegCategory(cat) => ctx.reg_category() == Some(*cat),
            CompiledRule::InStage(i) => member[*i],
            CompiledRule::Not(r, _) => !self.eval(r, ctx, member),
            CompiledRule::And(rs) => rs.iter().all(|r| self.eval(r, ctx, member)),
            CompiledRule::Or(rs) => rs.iter().any(|r| self.eval(r, ctx, member)),
        }
    }

    /// Full evaluation with evidence. `None` when the record is in no stage.
    pub fn evaluate(&self, record: &DeviceRecord) -> Option<MatchResult> {
        let member = self.memberships(record);
        if !member.iter().any(|&m| m) {
            return None;
        }
        Some(self.explain(record, &member))
    }

    fn explain(&self, record: &DeviceRecord, member: &[bool]) -> MatchResult {
        let ctx = Ctx::new(record, &self.grammar);
        let mut memberships = BTreeMap::new();
        for stage in &self.order {
            if !member[stage.index] {
                continue;
            }
            let mut ev = Vec::new();
            if let Some(src) = stage.source {
                ev.push(Evidence::InStage {
                    stage: self.names[src].to_string(),
                });
            }
            let held = self.collect(&stage.include, &ctx, member, &mut ev);
            debug_assert!(held);
            if let Some((_, rule)) = &stage.exclude {
                ev.push(Evidence::Absent { rule: rule.clone() });
            }
            ev.sort();
            ev.dedup();
            memberships.insert(stage.name.to_string(), ev);
        }
        MatchResult {
            record_id: record.record_id().to_string(),
            review_key: record.review_key().to_string(),
            memberships,
        }
    }

    fn collect(&self, rule: &CompiledRule, ctx: &Ctx<'_>, member: &[bool], out: &mut Vec<Evidence>) -> bool {
        match rule {
            CompiledRule::Keyword { matcher, fields } => {
                let kw = &self.keywords[*matcher];
                let before = out.len();
                for &field in fields {
                    for id in kw.matcher.hits(ctx.lowered(field)) {
                        for term in &kw.surface_terms[id] {
                            out.push(Evidence::Keyword {
                                field,
                                term: term.clone(),
                                surface: kw.matcher.surfaces()[id].clone(),
                            });
                        }
                    }
                }
                out.len() > before
            }
            CompiledRule::CodePrefix(prefix) => match ctx.code() {
                Some(c) if c.starts_with(prefix) => {
                    out.push(Evidence::CodePrefix {
                        prefix: prefix.clone(),
                        code: c.to_string(),
                    });
                    true
                }
                _ => false,
            },
            CompiledRule::RegCategory(cat) => {
                if ctx.reg_category() == Some(*cat) {
                    out.push(Evidence::RegCategory {
                        category: *cat,
                        registration: ctx.record.registration_number_raw().to_string(),
                    });
                    true
                } else {
                    false
                }
            }
            CompiledRule::InStage(i) => {
                if member[*i] {
                    out.push(Evidence::InStage {
                        stage: self.names[*i].to_string(),
                    });
                }
                member[*i]
            }
            CompiledRule::Not(r, negated) => {
                if self.eval(r, ctx, member) {
                    false
                } else {
                    out.push(Evidence::Absent { rule: negated.clone() });
                    true
                }
            }
            CompiledRule::And(rs) => {
                let mut local = Vec::new();
                for r in rs {
                    if !self.collect(r, ctx, member, &mut local) {
                        return false;
                    }
                }
                out.extend(local);
                true
            }
            CompiledRule::Or(rs) => {
                let mut any = false;
                for r in rs {
                    let mut local = Vec::new();
                    if self.collect(r, ctx, member, &mut local) {
                        out.extend(local);
                        any = true;
                    }
                }
                any
            }
        }
    }
}

struct RuleCompiler<'a> {
    stage: &'a str,
    index: &'a BTreeMap<&'a str, usize>,
    lexicon: &'a TermLexicon,
    keywords: &'a mut Vec<CompiledKeywords>,
}

impl RuleCompiler<'_> {
    fn err(&self, msg: impl std::fmt::Display) -> FilterError {
        FilterError::Spec(format!("stage {:?}: {msg}", self.stage))
    }

    fn compile(&mut self, rule: &Rule) -> Result<CompiledRule, FilterError> {
        Ok(match rule {
            Rule::KeywordAny { fields, terms } => {
                if fields.is_empty() {
                    return Err(self.err("keyword_any needs at least one field"));
                }
                if terms.is_empty() {
                    return Err(self.err("keyword_any has an empty term list"));
                }
                let fields = fields
                    .iter()
                    .map(|f| f.parse::<Field>().map_err(|_| self.err(format!("unknown field {f:?}"))))
                    .collect::<Result<Vec<_>, _>>()?;
                let mut surface_terms: Vec<(String, Vec<String>)> = Vec::new();
                for term in terms {
                    if term.trim().is_empty() {
                        return Err(self.err("keyword_any has an empty term"));
                    }
                    for surface in self.lexicon.expand(term) {
                        let folded = crate::text::fold(&surface);
                        match surface_terms.iter_mut().find(|(s, _)| *s == folded) {
                            Some((_, ts)) => {
                                if !ts.contains(term) {
                                    ts.push(term.clone());
                                }
                            }
                            None => surface_terms.push((folded, vec![term.clone()])),
                        }
                    }
                }
                let matcher =
                    KeywordMatcher::new(surface_terms.iter().map(|(s, _)| s.as_str())).map_err(|e| self.err(e))?;
                debug_assert_eq!(matcher.surfaces().len(), surface_terms.len());
                self.keywords.push(CompiledKeywords {
                    matcher,
                    surface_terms: surface_terms.into_iter().map(|(_, t)| t).collect(),
                });
                CompiledRule::Keyword {
                    matcher: self.keywords.len() - 1,
                    fields,
                }
            }
            Rule::CodePrefix(p) => {
                if p.is_empty() || p.len() > 3 || p.iter().any(|&s| s > 99) {
                    return Err(self.err("code_prefix needs 1 to 3 segments in 0..=99"));
                }
                CompiledRule::CodePrefix(p.clone())
            }
            Rule::RegCategoryIs(c) => {
                if *c > 99 {
                    return Err(self.err("reg_category_is must be in 0..=99"));
                }
                CompiledRule::RegCategory(*c)
            }
            Rule::InStage(s) => CompiledRule::InStage(self.index[s.as_str()]),
            Rule::Not(r) => CompiledRule::Not(Box::new(self.compile(r)?), (**r).clone()),
            Rule::And(rs) | Rule::Or(rs) => {
                if rs.is_empty() {
                    return Err(self.err("and/or needs at least one operand"));
                }
                let compiled = rs.iter().map(|r| self.compile(r)).collect::<Result<Vec<_>, _>>()?;
                if matches!(rule, Rule::And(_)) {
                    CompiledRule::And(compiled)
                } else {
                    CompiledRule::Or(compiled)
                }
            }
        })
    }
}

/// Kahn's algorithm, lowest index first. On a cycle returns the stages that
/// could not be ordered.
fn topological_order(deps: &[BTreeSet<usize>]) -> Result<Vec<usize>, Vec<usize>> {
    let mut done = vec![false; deps.len()];
    let mut order = Vec::with_capacity(deps.len());
    while order.len() < deps.len() {
        let next = (0..deps.len()).find(|&i| !done[i] && deps[i].iter().all(|&d| done[d]));
        match next {
            Some(i) => {
                done[i] = true;
                order.push(i);
            }
            None => return Err((0..deps.len()).filter(|&i| !done[i]).collect()),
        }
    }
    Ok(order)
}

/// Per-record lazily computed views.
struct Ctx<'r> {
    record: &'r DeviceRecord,
    grammar: &'r RegistrationGrammar,
    lowered: [OnceCell<Cow<'r, str>>; 8],
    code: OnceCell<Option<ClassificationCode>>,
    category: OnceCell<Option<u8>>,
}

impl<'r> Ctx<'r> {
    fn new(record: &'r DeviceRecord, grammar: &'r RegistrationGrammar) -> Self {
        Ctx {
            record,
            grammar,
            lowered: Default::default(),
            code: OnceCell::new(),
            category: OnceCell::new(),
        }
    }

    fn lowered(&self, field: Field) -> &str {
        self.lowered[field.index()].get_or_init(|| lowercase_for_match(self.record.get(field)))
    }

    fn code(&self) -> Option<&ClassificationCode> {
        self.code
            .get_or_init(|| parse_classification_code(self.record.classification_code_raw()).ok())
            .as_ref()
    }

    fn reg_category(&self) -> Option<u8> {
        *self.category.get_or_init(|| {
            self.grammar
                .parse(self.record.registration_number_raw())
                .ok()
                .map(|r| r.category)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::spec::{StageSpec, builtin_default_pipeline};

    fn bundled() -> RulePipeline {
        RulePipeline::compile(&builtin_default_pipeline(), &TermLexicon::bundled()).unwrap()
    }

    fn rec(code: &str, description: &str) -> DeviceRecord {
        DeviceRecord::builder("r")
            .classification_code(code)
            .description(description)
            .build()
            .unwrap()
    }

    fn stages(p: &RulePipeline, r: &DeviceRecord) -> Vec<String> {
        p.evaluate(r)
            .map(|m| m.memberships.into_keys().collect())
            .unwrap_or_default()
    }

    #[test]
    fn compiles_default_pipeline() {
        let p = bundled();
        assert_eq!(
            p.stage_names().collect::<Vec<_>>(),
            ["samd", "simd", "mdsw", "aimd_candidates"]
        );
    }

    #[test]
    fn samd_only_record() {
        assert_eq!(stages(&bundled(), &rec("21-01-01", "plain")), ["mdsw", "samd"]);
    }

    #[test]
    fn simd_by_keyword() {
        assert_eq!(
            stages(&bundled(), &rec("06-01", "a monitoring device for wards")),
            ["mdsw", "simd"]
        );
    }

    #[test]
    fn samd_with_ai_keyword() {
        assert_eq!(
            stages(&bundled(), &rec("21-02-02", "uses Deep learning")),
            ["aimd_candidates", "mdsw", "samd"]
        );
    }

    #[test]
    fn samd_with_simd_keyword_stays_out_of_simd() {
        assert_eq!(stages(&bundled(), &rec("21-02", "analysis software")), ["mdsw", "samd"]);
    }

    #[test]
    fn ai_keyword_outside_mdsw_is_ignored() {
        assert!(bundled().evaluate(&rec("06-01", "artificial intelligence")).is_none());
    }

    #[test]
    fn chinese_surface_forms_match() {
        assert_eq!(
            stages(&bundled(), &rec("07-03", "心电监护设备，含深度学习算法")),
            ["aimd_candidates", "mdsw", "simd"]
        );
    }

    #[test]
    fn evidence_cites_terms() {
        let m = bundled().evaluate(&rec("21-01", "Deep Learning and 深度学习")).unwrap();
        let ev = &m.memberships["aimd_candidates"];
        assert!(ev.contains(&Evidence::InStage { stage: "mdsw".into() }));
        assert!(ev.contains(&Evidence::Keyword {
            field: Field::Description,
            term: "Deep learning".into(),
            surface: "深度学习".into()
        }));
        assert!(ev.contains(&Evidence::Keyword {
            field: Field::Description,
            term: "Deep learning".into(),
            surface: "deep learning".into()
        }));
        let simd_absent = m.memberships["samd"].clone();
        assert_eq!(
            simd_absent,
            vec![Evidence::CodePrefix {
                prefix: vec![21],
                code: "21-01".into()
            }]
        );
    }

    fn one_stage(include: Rule) -> PipelineSpec {
        PipelineSpec {
            name: "t".into(),
            description: None,
            dedup_by_di: false,
            roles: Default::default(),
            stages: vec![StageSpec {
                name: "s".into(),
                source: ALL.into(),
                include,
                exclude: None,
            }],
        }
    }

    fn compile_err(spec: &PipelineSpec) -> String {
        match RulePipeline::compile(spec, &TermLexicon::default()) {
            Err(FilterError::Spec(m)) => m,
            other => panic!("expected SpecError, got {other:?}"),
        }
    }

    #[test]
    fn self_source_is_a_cycle() {
        let mut spec = one_stage(Rule::CodePrefix(vec![21]));
        spec.stages[0].source = "s".into();
        assert!(compile_err(&spec).contains("cyclic"));
    }

    #[test]
    fn mutual_in_stage_is_a_cycle() {
        let mut spec = one_stage(Rule::InStage("b".into()));
        spec.stages.push(StageSpec {
            name: "b".into(),
            source: "s".into(),
            include: Rule::CodePrefix(vec![1]),
            exclude: None,
        });
        assert!(compile_err(&spec).contains("cyclic"));
    }

    #[test]
    fn misspelled_field_is_rejected() {
        let spec = one_stage(Rule::keyword_any(["descriptoin"], ["x"]));
        assert!(compile_err(&spec).contains("unknown field"));
    }

    #[test]
    fn empty_terms_rejected() {
        let spec = one_stage(Rule::keyword_any(["description"], Vec::<String>::new()));
        assert!(compile_err(&spec).contains("empty term list"));
        let spec = one_stage(Rule::keyword_any(["description"], [" "]));
        assert!(compile_err(&spec).contains("empty term"));
    }

    #[test]
    fn undefined_references_rejected() {
        assert!(compile_err(&one_stage(Rule::InStage("nope".into()))).contains("undefined"));
        let mut spec = one_stage(Rule::CodePrefix(vec![21]));
        spec.roles.samd = Some("missing".into());
        assert!(compile_err(&spec).contains("undefined"));
        let mut spec = one_stage(Rule::CodePrefix(vec![21]));
        spec.stages.push(spec.stages[0].clone());
        assert!(compile_err(&spec).contains("duplicate"));
    }

    #[test]
    fn reg_category_rule() {
        let p = RulePipeline::compile(&one_stage(Rule::RegCategoryIs(21)), &TermLexicon::default()).unwrap();
        let r = DeviceRecord::builder("x")
            .registration_number("国械注准20153211878")
            .build()
            .unwrap();
        assert_eq!(p.memberships(&r), vec![true]);
        let r = DeviceRecord::builder("x")
            .registration_number("国械注准20153061878")
            .build()
            .unwrap();
        assert_eq!(p.memberships(&r), vec![false]);
    }

    #[test]
    fn compilation_preserves_term_set() {
        let p = bundled();
        let lex = TermLexicon::bundled();
        let spec = builtin_default_pipeline();
        let Rule::KeywordAny { terms, .. } = &spec.stage("aimd_candidates").unwrap().include else {
            panic!()
        };
        let expected: BTreeSet<String> = terms
            .iter()
            .flat_map(|t| lex.expand(t))
            .map(|s| crate::text::fold(&s))
            .collect();
        let compiled: BTreeSet<String> = p.compiled_surfaces()[1].iter().cloned().collect();
        assert_eq!(compiled, expected);
    }
}
