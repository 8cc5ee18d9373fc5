use std::collections::BTreeSet;

use mdscan_core::filter::naive::NaiveOracle;
use mdscan_core::filter::{
    ALL, PipelineSpec, Roles, Rule, RulePipeline, StageSpec, TermLexicon, builtin_default_pipeline, run_pipeline,
};
use mdscan_core::record::DeviceRecord;
use mdscan_core::regnum::default_grammar;
use proptest::prelude::*;

const FRAGMENTS: &[&str] = &[
    "software",
    "SOFTWARE",
    "Ｓｏｆｔｗａｒｅ",
    "soft ware",
    "软件",
    "软 件",
    "影像设备",
    "成像设备",
    "imaging device",
    "Imaging  device",
    "deep learning",
    "DEEP LEARNING",
    "Deep-learning",
    "深度学习",
    "人工智能",
    "Artificial Intelligence",
    "artificial intelligenc",
    "machine learning",
    "机器学习",
    "Convolutional Neural Network (CNN)",
    "CNN",
    "(RNN)",
    "辅助诊断",
    "辅助 诊断",
    "辅助治疗",
    "image enhancement",
    "图像增强",
    "noise reduction optimization",
    "intelligent analysis",
    "智能分析",
    "自动测量",
    "监护设备",
    "İ",
    "ß",
    "K",
    "Å",
    "设备",
    "检测",
    " ",
    ", ",
    "\n",
    "x",
];

const CODES: &[&str] = &[
    "21-01-01",
    "21",
    " 21-02 ",
    "2１-01",
    "２１-01-01",
    "12-21-01",
    "21-1",
    "06-07-01",
    "",
    "21-01-01-01",
    "99",
];

const REGNUMS: &[&str] = &[
    "国械注准20153211878",
    "国械注进20172210001",
    "粤械注准20242071111号",
    "国械注许20202210002",
    "National20153211878",
    "国械注准2015321",
    "",
    "备案",
];

const FIELDS: &[&str] = &["description", "product_name", "generic_name", "manufacturer"];

const TERMS: &[&str] = &[
    "software",
    "imaging device",
    "Deep learning",
    "Artificial Intelligence",
    "Auxiliary diagnosis",
    "Convolutional Neural Network (CNN)",
    "设备",
    "ai",
    "K",
];

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(FRAGMENTS), 0..6).prop_map(|parts| parts.concat())
}

fn record() -> impl Strategy<Value = DeviceRecord> {
    (
        text(),
        text(),
        text(),
        text(),
        prop::sample::select(CODES),
        prop::sample::select(REGNUMS),
        0u32..1000,
    )
        .prop_map(|(desc, name, generic, manufacturer, code, reg, id)| {
            DeviceRecord::builder(format!("id{id}"))
                .description(desc)
                .product_name(name)
                .generic_name(generic)
                .manufacturer(manufacturer)
                .classification_code(code)
                .registration_number(reg)
                .build()
                .unwrap()
        })
}

fn leaf(stages: usize) -> BoxedStrategy<Rule> {
    let keyword = (
        prop::collection::btree_set(prop::sample::select(FIELDS), 1..3),
        prop::collection::btree_set(prop::sample::select(TERMS), 1..4),
    )
        .prop_map(|(f, t)| Rule::keyword_any(f, t));
    let prefix = prop::collection::vec(prop::sample::select(&[21u8, 1, 6, 7][..]), 1..3).prop_map(Rule::CodePrefix);
    let category = prop::sample::select(&[21u8, 7, 22][..]).prop_map(Rule::RegCategoryIs);
    if stages == 0 {
        prop_oneof![keyword, prefix, category].boxed()
    } else {
        let stage = (0..stages).prop_map(|i| Rule::InStage(format!("s{i}")));
        prop_oneof![3 => keyword, 1 => prefix, 1 => category, 2 => stage].boxed()
    }
}

fn rule(stages: usize) -> impl Strategy<Value = Rule> {
    leaf(stages).prop_recursive(3, 12, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(Rule::negate),
            prop::collection::vec(inner.clone(), 1..4).prop_map(Rule::And),
            prop::collection::vec(inner, 1..4).prop_map(Rule::Or),
        ]
    })
}

fn stage(i: usize) -> impl Strategy<Value = StageSpec> {
    let source = if i == 0 {
        Just(ALL.to_string()).boxed()
    } else {
        prop_oneof![Just(ALL.to_string()), (0..i).prop_map(|j| format!("s{j}"))].boxed()
    };
    (source, rule(i), prop::option::of(rule(i))).prop_map(move |(source, include, exclude)| StageSpec {
        name: format!("s{i}"),
        source,
        include,
        exclude,
    })
}

fn spec() -> impl Strategy<Value = PipelineSpec> {
    (stage(0), stage(1), stage(2), stage(3)).prop_map(|(a, b, c, d)| PipelineSpec {
        name: "random".into(),
        description: None,
        dedup_by_di: false,
        roles: Roles::default(),
        stages: vec![a, b, c, d],
    })
}

fn check(pipeline: &RulePipeline, records: &[DeviceRecord]) -> Result<(), TestCaseError> {
    let oracle = NaiveOracle::new(pipeline.spec(), pipeline.lexicon(), pipeline.grammar());
    for r in records {
        let expected = oracle.stages(r);
        let result = pipeline.evaluate(r);
        let got: BTreeSet<String> = result
            .as_ref()
            .map(|m| m.memberships.keys().cloned().collect())
            .unwrap_or_default();
        prop_assert_eq!(&got, &expected, "record {:?}", r);
        let flags = pipeline.memberships(r);
        let from_flags: BTreeSet<String> = pipeline
            .stage_names()
            .zip(flags)
            .filter(|(_, m)| *m)
            .map(|(s, _)| s.to_string())
            .collect();
        prop_assert_eq!(&from_flags, &expected);
        if let Some(m) = &result {
            for ev in m.memberships.values().flatten() {
                prop_assert!(oracle.recheck(r, m, ev), "evidence {:?} fails recheck", ev);
            }
        }
    }
    let outcome = run_pipeline(pipeline, records.iter().cloned().map(Ok::<_, ()>)).unwrap();
    for (stage, count) in outcome.stages.iter().zip(&outcome.counts) {
        let naive = records.iter().filter(|r| oracle.stages(r).contains(stage)).count() as u64;
        prop_assert_eq!(*count, naive, "stage {}", stage);
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn default_pipeline_matches_oracle(records in prop::collection::vec(record(), 1..40)) {
        let pipeline = RulePipeline::compile(&builtin_default_pipeline(), &TermLexicon::bundled()).unwrap();
        check(&pipeline, &records)?;
    }

    #[test]
    fn random_pipelines_match_oracle(spec in spec(), records in prop::collection::vec(record(), 1..20)) {
        let pipeline = RulePipeline::compile(&spec, &TermLexicon::bundled()).unwrap();
        check(&pipeline, &records)?;
    }

    #[test]
    fn chunked_parallel_evaluation_matches_sequential(
        records in prop::collection::vec(record(), 1..60),
        cut in 0usize..60,
    ) {
        let pipeline = RulePipeline::compile(&builtin_default_pipeline(), &TermLexicon::bundled()).unwrap();
        let seq = run_pipeline(&pipeline, records.iter().cloned().map(Ok::<_, ()>)).unwrap();
        let cut = cut.min(records.len());
        let right = pipeline.evaluate_chunk_par(records[cut..].to_vec());
        let left = pipeline.evaluate_chunk(records[..cut].iter().cloned());
        let merged = right.merge(left).finish(&pipeline);
        prop_assert_eq!(merged, seq);
    }
}

#[test]
fn default_pipeline_grammar_is_the_bundled_one() {
    let pipeline = RulePipeline::compile(&builtin_default_pipeline(), &TermLexicon::bundled()).unwrap();
    let r = pipeline.grammar().parse("国械注准20153211878").unwrap();
    assert_eq!(r, default_grammar().parse("国械注准20153211878").unwrap());
}
