use mdscan_core::record::DeviceClass;
use mdscan_core::regnum::{Issuer, Origin, RegistrationNumber, default_grammar, parse_registration_number};
use mdscan_core::udi::{Agency, complete_gtin14, parse_udi, validate_gtin14_check};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Check digit computed right to left: the digit next to the check digit
/// weighs 3, the one before it 1, and so on.
fn oracle_check_digit(payload13: &[u8]) -> u8 {
    let mut sum = 0u32;
    for (pos, d) in payload13.iter().rev().enumerate() {
        let w = if pos % 2 == 0 { 3 } else { 1 };
        sum += w * u32::from(d - b'0');
    }
    let rem = sum % 10;
    if rem == 0 { 0 } else { (10 - rem) as u8 }
}

fn random_digits(rng: &mut impl Rng, n: usize) -> String {
    (0..n).map(|_| char::from(b'0' + rng.gen_range(0..10u8))).collect()
}

#[test]
fn gtin_check_digit_agrees_with_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..10_000 {
        let body = random_digits(&mut rng, 13);
        let expected = oracle_check_digit(body.as_bytes());
        let full = complete_gtin14(&body).unwrap();
        assert_eq!(full.as_bytes()[13] - b'0', expected, "{body}");
        for check in 0..10u8 {
            let candidate = format!("{body}{check}");
            assert_eq!(
                validate_gtin14_check(&candidate).unwrap(),
                check == expected,
                "{candidate}"
            );
        }
    }
}

#[test]
fn gtin_single_digit_perturbation_is_detected() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..2_000 {
        let full = complete_gtin14(&random_digits(&mut rng, 13)).unwrap();
        for pos in 0..14 {
            for d in b'0'..=b'9' {
                let mut bytes = full.clone().into_bytes();
                if bytes[pos] == d {
                    continue;
                }
                bytes[pos] = d;
                let mutated = String::from_utf8(bytes).unwrap();
                assert!(!validate_gtin14_check(&mutated).unwrap(), "{full} -> {mutated}");
            }
        }
    }
}

#[test]
fn parsed_gs1_udi_reports_agency_and_check() {
    let code = parse_udi("(01)00000000000000").unwrap();
    assert_eq!(code.di.agency, Agency::Gs1);
    assert_eq!(code.di.canonical, "00000000000000");
    assert!(parse_udi("(01)00000000000001").is_err());
}

#[test]
fn registration_numbers_round_trip() {
    let grammar = default_grammar();
    let mut origins = vec![Origin::Imported, Origin::Sar];
    origins.extend(grammar.domestic_issuers().into_iter().map(Origin::Domestic));
    let classes = [DeviceClass::I, DeviceClass::II, DeviceClass::III];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut seen_origins = std::collections::BTreeSet::new();
    let mut seen_classes = std::collections::BTreeSet::new();
    for i in 0..1_000usize {
        let origin = origins[i % origins.len()].clone();
        let class = classes[(i / origins.len()) % 3];
        let n = RegistrationNumber::new(
            grammar,
            origin.clone(),
            rng.gen_range(1990..=2030),
            class,
            rng.gen_range(0..=99),
            rng.gen_range(0..=99_999),
        )
        .unwrap();
        let parsed = grammar.parse(&n.raw).unwrap();
        assert_eq!(parsed, n, "{}", n.raw);
        assert_eq!(grammar.format(&parsed).unwrap(), n.raw);
        seen_origins.insert(origin.kind_label());
        seen_classes.insert(class);
    }
    assert_eq!(seen_origins.len(), 3);
    assert_eq!(seen_classes.len(), 3);
}

#[test]
fn national_example_decodes() {
    let r = parse_registration_number("国械注准20153211878").unwrap();
    assert_eq!(r.origin, Origin::Domestic(Issuer::National));
    assert_eq!((r.device_class, r.category, r.year), (DeviceClass::III, 21, 2015));
}
