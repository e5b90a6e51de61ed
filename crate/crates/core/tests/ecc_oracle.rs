mod common;

use proptest::prelude::*;
use ssvf::ecc::{self, EccVerdict, ErrorPattern, ProtectionScheme, SchemeKind};

fn all_schemes() -> Vec<ProtectionScheme> {
    let mut v = ProtectionScheme::protected_five().to_vec();
    v.push(ProtectionScheme::standard(SchemeKind::None));
    v.push(ProtectionScheme::new(SchemeKind::InterleavedSecded, 4).unwrap());
    v.push(ProtectionScheme::new(SchemeKind::InterleavedParity, 8).unwrap());
    v
}

#[test]
fn data_field_matches_enumeration() {
    for scheme in all_schemes() {
        for m in 1..=8 {
            for l in 0..=common::DATA_BITS - m {
                let got = ecc::classify_data_field(scheme, ErrorPattern::new(m, l), 512, 64).unwrap();
                assert_eq!(got, common::oracle_verdict(scheme, m, l, 512, 64), "{scheme} m={m} l={l}");
            }
        }
    }
}

#[test]
fn tag_field_matches_enumeration() {
    for scheme in all_schemes() {
        for m in 1..=8 {
            for l in 0..=32 - m {
                let got = ecc::classify_flips(scheme, m);
                assert_eq!(got, common::oracle_verdict(scheme, m, l, 32, 32), "{scheme} m={m} l={l}");
            }
        }
    }
}

#[test]
fn per_word_verdicts_match_enumeration() {
    for scheme in ProtectionScheme::protected_five() {
        for m in 1..=8 {
            for l in 0..=512 - m {
                let words = ecc::classify_data_words(scheme, ErrorPattern::new(m, l), 512, 64).unwrap();
                for (w, v) in words {
                    let (start, end) = (l.max(w * 64), (l + m).min(w * 64 + 64));
                    let want = common::oracle_verdict(scheme, end - start, start - w * 64, 64, 64);
                    assert_eq!(v, want, "{scheme} m={m} l={l} word {w}");
                }
            }
        }
    }
}

#[test]
fn documented_cases() {
    let s = |k| ProtectionScheme::standard(k);
    let split = ecc::split_pattern(ErrorPattern::new(4, 126), 512, 64).unwrap();
    assert_eq!(split.into_iter().collect::<Vec<_>>(), vec![(1, 2), (2, 2)]);
    assert_eq!(ecc::interleave_split(2, 3), vec![2, 1]);
    assert_eq!(ecc::classify_flips(s(SchemeKind::InterleavedParity), 3), EccVerdict::Due);
    assert_eq!(ecc::classify_flips(s(SchemeKind::InterleavedParity), 4), EccVerdict::Sdc);
    assert_eq!(ecc::classify_flips(s(SchemeKind::InterleavedSecded), 4), EccVerdict::Due);
    assert_eq!(ecc::classify_flips(s(SchemeKind::InterleavedSecded), 2), EccVerdict::Dce);
    assert_eq!(ecc::classify_subcode(SchemeKind::Secded, 3), EccVerdict::Sdc);
    assert_eq!(ecc::classify_subcode(SchemeKind::Dected, 3), EccVerdict::Due);
    assert!(ecc::split_pattern(ErrorPattern::new(2, 511), 512, 64).is_err());
}

#[test]
fn interleaved_secded_never_silent_up_to_four_bits() {
    let s = ProtectionScheme::standard(SchemeKind::InterleavedSecded);
    for m in 1..=4 {
        for l in 0..=512 - m {
            assert_ne!(ecc::classify_data_field(s, ErrorPattern::new(m, l), 512, 64).unwrap(), EccVerdict::Sdc);
        }
    }
}

fn verdict() -> impl Strategy<Value = EccVerdict> {
    prop_oneof![Just(EccVerdict::NoError), Just(EccVerdict::Dce), Just(EccVerdict::Due), Just(EccVerdict::Sdc)]
}

proptest! {
    #[test]
    fn combine_is_order_free(mut vs in prop::collection::vec(verdict(), 0..10), seed in any::<u64>()) {
        let a = ecc::combine(vs.clone());
        let k = vs.len().max(1);
        vs.rotate_left((seed as usize) % k);
        vs.reverse();
        prop_assert_eq!(a, ecc::combine(vs));
    }

    #[test]
    fn due_dominates(vs in prop::collection::vec(verdict(), 0..10), at in 0usize..10) {
        let mut vs = vs;
        vs.insert(at.min(vs.len()), EccVerdict::Due);
        prop_assert_eq!(ecc::combine(vs), EccVerdict::Due);
    }

    #[test]
    fn split_conserves_flips(m in 1u32..=16, l in 0u32..512) {
        prop_assume!(l + m <= 512);
        let split = ecc::split_pattern(ErrorPattern::new(m, l), 512, 64).unwrap();
        prop_assert_eq!(split.values().sum::<u32>(), m);
        prop_assert!(split.len() <= 2 || m > 64);
        let parts = ecc::interleave_split(2, m);
        prop_assert_eq!(parts.iter().sum::<u32>(), m);
        prop_assert!(parts[0] >= parts[1] && parts[0] - parts[1] <= 1);
    }
}
