#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use mdscan_core::annotate::{
    AnnotatedDevice, DecisionSubtype, FunctionCategory, FunctionLabel, Pathway, SoftwareKind, Technique,
};
use mdscan_core::filter::MatchResult;
use mdscan_core::record::{DeviceClass, DeviceRecord};
use mdscan_core::regnum::{Issuer, Origin};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn device(id: usize) -> AnnotatedDevice {
    let record = DeviceRecord::builder(format!("{id:014}"))
        .registration_number(format!("REG{id}"))
        .product_name(format!("product {id}"))
        .build()
        .unwrap();
    let result = MatchResult {
        record_id: format!("{id:014}"),
        review_key: format!("REG{id}"),
        memberships: BTreeMap::new(),
    };
    AnnotatedDevice {
        record: Arc::new(record),
        result: Arc::new(result),
        software_kind: SoftwareKind::SaMD,
        ai_candidate: false,
        ai_flag: false,
        technique: Technique::NotAI,
        specialty: "Unknown".into(),
        function: FunctionLabel::UNCATEGORIZED,
        pathway: Pathway::Unknown,
        origin: None,
        device_class: None,
    }
}

pub const SPECIALTIES: [&str; 6] = [
    "Radiology",
    "Cardiology",
    "Ophthalmology",
    "Endocrinology",
    "Neurology",
    "Unknown",
];

pub fn origins() -> Vec<Option<Origin>> {
    vec![
        None,
        Some(Origin::Imported),
        Some(Origin::Sar),
        Some(Origin::Domestic(Issuer::National)),
        Some(Origin::Domestic(Issuer::Province("Guangdong".into()))),
        Some(Origin::Domestic(Issuer::Province("Hubei".into()))),
        Some(Origin::Domestic(Issuer::Province("Zhejiang".into()))),
    ]
}

/// `n` devices with labels drawn uniformly from every dimension.
pub fn random_devices(n: usize, seed: u64) -> Vec<AnnotatedDevice> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origins = origins();
    let functions: Vec<FunctionLabel> = FunctionCategory::ALL
        .iter()
        .filter(|c| **c != FunctionCategory::DecisionSupport)
        .map(|c| FunctionLabel::new(*c, None).unwrap())
        .chain(DecisionSubtype::ALL.iter().map(|s| FunctionLabel::decision_support(*s)))
        .collect();
    (0..n)
        .map(|i| {
            let mut d = device(i);
            d.software_kind = *SoftwareKind::ALL.choose(&mut rng).unwrap();
            d.ai_candidate = rng.gen_bool(0.3);
            d.ai_flag = d.ai_candidate && rng.gen_bool(0.8);
            d.technique = *Technique::ALL.choose(&mut rng).unwrap();
            d.specialty = SPECIALTIES.choose(&mut rng).unwrap().to_string();
            d.function = *functions.choose(&mut rng).unwrap();
            d.pathway = *Pathway::ALL.choose(&mut rng).unwrap();
            d.origin = origins.choose(&mut rng).unwrap().clone();
            d.device_class = [
                None,
                Some(DeviceClass::I),
                Some(DeviceClass::II),
                Some(DeviceClass::III),
            ]
            .choose(&mut rng)
            .copied()
            .unwrap();
            d
        })
        .collect()
}
