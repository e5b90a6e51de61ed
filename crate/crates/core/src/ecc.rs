//! ECC coverage model for contiguous `M x 1` error patterns.
//!
//! Verdicts are a function of how many bits land in each protected codeword.
//! A data field is split into independent words, each word is optionally
//! split again into round-robin interleaved subcodes, and every subcode is
//! judged by a flip-count rule table. No syndrome arithmetic is performed.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Protection code family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeKind {
    None,
    Parity,
    InterleavedParity,
    Secded,
    InterleavedSecded,
    Dected,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 6] = [
        SchemeKind::None,
        SchemeKind::Parity,
        SchemeKind::InterleavedParity,
        SchemeKind::Secded,
        SchemeKind::InterleavedSecded,
        SchemeKind::Dected,
    ];

    pub fn is_interleaved(self) -> bool {
        matches!(self, SchemeKind::InterleavedParity | SchemeKind::InterleavedSecded)
    }

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::None => "none",
            SchemeKind::Parity => "parity",
            SchemeKind::InterleavedParity => "interleaved-parity",
            SchemeKind::Secded => "secded",
            SchemeKind::InterleavedSecded => "interleaved-secded",
            SchemeKind::Dected => "dected",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Ok(match norm.as_str() {
            "none" => SchemeKind::None,
            "parity" => SchemeKind::Parity,
            "interleaved-parity" | "iparity" => SchemeKind::InterleavedParity,
            "secded" => SchemeKind::Secded,
            "interleaved-secded" | "isecded" => SchemeKind::InterleavedSecded,
            "dected" => SchemeKind::Dected,
            _ => {
                return Err(Error::Config {
                    field: "scheme".into(),
                    reason: format!("unknown protection scheme `{s}`"),
                })
            }
        })
    }
}

/// A protection scheme applied identically to tag and data fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ProtectionScheme {
    kind: SchemeKind,
    interleave_ways: u32,
}

impl ProtectionScheme {
    /// Builds a scheme. Linear schemes require `interleave_ways == 1`,
    /// interleaved schemes require at least two ways.
    pub fn new(kind: SchemeKind, interleave_ways: u32) -> Result<Self> {
        let ok = if kind.is_interleaved() {
            interleave_ways >= 2
        } else {
            interleave_ways == 1
        };
        if !ok {
            return Err(Error::Config {
                field: "scheme.interleave_ways".into(),
                reason: format!("{kind} cannot use {interleave_ways} interleave ways"),
            });
        }
        Ok(ProtectionScheme { kind, interleave_ways })
    }

    /// The scheme with its conventional width: two ways for the interleaved
    /// kinds, one otherwise.
    pub fn standard(kind: SchemeKind) -> Self {
        let ways = if kind.is_interleaved() { 2 } else { 1 };
        ProtectionScheme { kind, interleave_ways: ways }
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn interleave_ways(&self) -> u32 {
        self.interleave_ways
    }

    /// The five protected configurations compared throughout the crate.
    pub fn protected_five() -> [ProtectionScheme; 5] {
        [
            Self::standard(SchemeKind::Parity),
            Self::standard(SchemeKind::Secded),
            Self::standard(SchemeKind::InterleavedParity),
            Self::standard(SchemeKind::Dected),
            Self::standard(SchemeKind::InterleavedSecded),
        ]
    }
}

impl fmt::Display for ProtectionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.kind.is_interleaved() && self.interleave_ways != 2 {
            write!(f, "{}-{}", self.kind, self.interleave_ways)
        } else {
            write!(f, "{}", self.kind)
        }
    }
}

impl FromStr for ProtectionScheme {
    type Err = Error;

    /// Accepts `secded`, `interleaved-parity`, or `interleaved-parity-4`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((head, tail)) = s.rsplit_once('-') {
            if let Ok(ways) = tail.parse::<u32>() {
                return ProtectionScheme::new(head.parse()?, ways);
            }
        }
        Ok(ProtectionScheme::standard(s.parse()?))
    }
}

impl TryFrom<String> for ProtectionScheme {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ProtectionScheme> for String {
    fn from(p: ProtectionScheme) -> Self {
        p.to_string()
    }
}

/// A contiguous run of `m` flipped bits starting at bit `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ErrorPattern {
    pub m: u32,
    pub l: u32,
}

impl ErrorPattern {
    pub fn new(m: u32, l: u32) -> Self {
        ErrorPattern { m, l }
    }

    /// One past the last flipped bit.
    pub fn end(&self) -> u32 {
        self.l + self.m
    }

    pub fn bits(&self) -> std::ops::Range<u32> {
        self.l..self.end()
    }

    pub fn check_bounds(&self, field_bits: u32) -> Result<()> {
        if self.m == 0 || self.end() > field_bits {
            return Err(Error::Bounds(format!(
                "pattern m={} l={} does not fit a {field_bits}-bit field",
                self.m, self.l
            )));
        }
        Ok(())
    }
}

/// Outcome of an ECC check on one codeword or on a whole field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EccVerdict {
    NoError,
    Dce,
    Due,
    Sdc,
}

/// Which protected field of a cache block a pattern lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FieldKind {
    Tag,
    DataWord,
}

/// Buckets the flipped bits of `pattern` by `word_bits`-wide word.
///
/// A pattern that crosses a word boundary yields entries for each word it
/// touches; for the usual `m <= word_bits` that is exactly two adjacent words.
pub fn split_pattern(
    pattern: ErrorPattern,
    field_bits: u32,
    word_bits: u32,
) -> Result<BTreeMap<u32, u32>> {
    if word_bits == 0 || field_bits % word_bits != 0 {
        return Err(Error::Bounds(format!(
            "word width {word_bits} does not divide field width {field_bits}"
        )));
    }
    pattern.check_bounds(field_bits)?;
    let mut out = BTreeMap::new();
    let mut bit = pattern.l;
    while bit < pattern.end() {
        let word = bit / word_bits;
        let word_end = (word + 1) * word_bits;
        let take = word_end.min(pattern.end()) - bit;
        out.insert(word, take);
        bit += take;
    }
    Ok(out)
}

/// Distributes a contiguous run of `flips` bits round-robin over `ways`
/// subcodes. Counts differ by at most one and the first subcode gets the
/// remainder.
pub fn interleave_split(ways: u32, flips: u32) -> Vec<u32> {
    let ways = ways.max(1);
    let base = flips / ways;
    let extra = flips % ways;
    (0..ways).map(|i| base + u32::from(i < extra)).collect()
}

/// Flip-count rule table for a single codeword.
pub fn classify_subcode(kind: SchemeKind, flips: u32) -> EccVerdict {
    if flips == 0 {
        return EccVerdict::NoError;
    }
    match kind {
        SchemeKind::None => EccVerdict::Sdc,
        SchemeKind::Parity | SchemeKind::InterleavedParity => {
            if flips % 2 == 1 {
                EccVerdict::Due
            } else {
                EccVerdict::Sdc
            }
        }
        SchemeKind::Secded | SchemeKind::InterleavedSecded => match flips {
            1 => EccVerdict::Dce,
            2 => EccVerdict::Due,
            _ => EccVerdict::Sdc,
        },
        SchemeKind::Dected => match flips {
            1 | 2 => EccVerdict::Dce,
            3 => EccVerdict::Due,
            _ => EccVerdict::Sdc,
        },
    }
}

/// Folds per-codeword verdicts into one: any `Due` wins, then any `Sdc`,
/// then `Dce` if anything was flipped at all.
pub fn combine<I: IntoIterator<Item = EccVerdict>>(verdicts: I) -> EccVerdict {
    let mut out = EccVerdict::NoError;
    for v in verdicts {
        out = match (out, v) {
            (EccVerdict::Due, _) | (_, EccVerdict::Due) => EccVerdict::Due,
            (EccVerdict::Sdc, _) | (_, EccVerdict::Sdc) => EccVerdict::Sdc,
            (EccVerdict::Dce, _) | (_, EccVerdict::Dce) => EccVerdict::Dce,
            _ => EccVerdict::NoError,
        };
    }
    out
}

/// Classifies a pattern confined to one codeword span (one data word or the
/// tag). MCUs must be split with [`split_pattern`] first.
pub fn classify_field(scheme: ProtectionScheme, pattern: ErrorPattern, _field: FieldKind) -> EccVerdict {
    classify_flips(scheme, pattern.m)
}

/// Same as [`classify_field`] but from a bare count of contiguous flips
/// within one codeword span.
pub fn classify_flips(scheme: ProtectionScheme, flips: u32) -> EccVerdict {
    combine(
        interleave_split(scheme.interleave_ways(), flips)
            .into_iter()
            .map(|c| classify_subcode(scheme.kind(), c)),
    )
}

/// Per-word verdicts for a data-field pattern, keyed by word index.
pub fn classify_data_words(
    scheme: ProtectionScheme,
    pattern: ErrorPattern,
    field_bits: u32,
    word_bits: u32,
) -> Result<BTreeMap<u32, EccVerdict>> {
    Ok(split_pattern(pattern, field_bits, word_bits)?
        .into_iter()
        .map(|(w, c)| (w, classify_flips(scheme, c)))
        .collect())
}

/// Field-level verdict for a data-field pattern, possibly spanning words.
pub fn classify_data_field(
    scheme: ProtectionScheme,
    pattern: ErrorPattern,
    field_bits: u32,
    word_bits: u32,
) -> Result<EccVerdict> {
    Ok(combine(
        classify_data_words(scheme, pattern, field_bits, word_bits)?.into_values(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scheme(kind: SchemeKind) -> ProtectionScheme {
        ProtectionScheme::standard(kind)
    }

    #[test]
    fn split_examples() {
        let m = split_pattern(ErrorPattern::new(3, 63), 512, 64).unwrap();
        assert_eq!(m, BTreeMap::from([(0, 1), (1, 2)]));
        let m = split_pattern(ErrorPattern::new(1, 0), 512, 64).unwrap();
        assert_eq!(m, BTreeMap::from([(0, 1)]));
        let m = split_pattern(ErrorPattern::new(4, 126), 512, 64).unwrap();
        assert_eq!(m, BTreeMap::from([(1, 2), (2, 2)]));
    }

    #[test]
    fn split_rejects_out_of_bounds() {
        assert!(split_pattern(ErrorPattern::new(2, 511), 512, 64).is_err());
        assert!(split_pattern(ErrorPattern::new(0, 3), 512, 64).is_err());
        assert!(split_pattern(ErrorPattern::new(1, 0), 512, 48).is_err());
    }

    #[test]
    fn interleave_examples() {
        assert_eq!(interleave_split(2, 3), vec![2, 1]);
        assert_eq!(interleave_split(2, 4), vec![2, 2]);
        assert_eq!(interleave_split(1, 3), vec![3]);
    }

    #[test]
    fn subcode_rules() {
        assert_eq!(classify_subcode(SchemeKind::Parity, 2), EccVerdict::Sdc);
        assert_eq!(classify_subcode(SchemeKind::Parity, 3), EccVerdict::Due);
        assert_eq!(classify_subcode(SchemeKind::Secded, 3), EccVerdict::Sdc);
        assert_eq!(classify_subcode(SchemeKind::Dected, 3), EccVerdict::Due);
        assert_eq!(classify_subcode(SchemeKind::Dected, 2), EccVerdict::Dce);
        assert_eq!(classify_subcode(SchemeKind::None, 1), EccVerdict::Sdc);
        assert_eq!(classify_subcode(SchemeKind::None, 0), EccVerdict::NoError);
    }

    #[test]
    fn field_examples() {
        let ip = scheme(SchemeKind::InterleavedParity);
        let is = scheme(SchemeKind::InterleavedSecded);
        assert_eq!(classify_field(ip, ErrorPattern::new(3, 0), FieldKind::DataWord), EccVerdict::Due);
        assert_eq!(classify_field(ip, ErrorPattern::new(4, 0), FieldKind::DataWord), EccVerdict::Sdc);
        assert_eq!(classify_field(is, ErrorPattern::new(4, 0), FieldKind::DataWord), EccVerdict::Due);
        assert_eq!(classify_field(is, ErrorPattern::new(2, 0), FieldKind::DataWord), EccVerdict::Dce);
    }

    #[test]
    fn mcu_under_parity_is_due_and_sdc() {
        let words = classify_data_words(scheme(SchemeKind::Parity), ErrorPattern::new(3, 63), 512, 64).unwrap();
        assert_eq!(words[&0], EccVerdict::Due);
        assert_eq!(words[&1], EccVerdict::Sdc);
        assert_eq!(
            classify_data_field(scheme(SchemeKind::Parity), ErrorPattern::new(3, 63), 512, 64).unwrap(),
            EccVerdict::Due
        );
    }

    #[test]
    fn scheme_parsing_and_validation() {
        assert_eq!("secded".parse::<ProtectionScheme>().unwrap(), scheme(SchemeKind::Secded));
        let four: ProtectionScheme = "interleaved-parity-4".parse().unwrap();
        assert_eq!(four.interleave_ways(), 4);
        assert!("hamming".parse::<ProtectionScheme>().is_err());
        assert!(ProtectionScheme::new(SchemeKind::Secded, 2).is_err());
        assert!(ProtectionScheme::new(SchemeKind::InterleavedSecded, 1).is_err());
        for k in SchemeKind::ALL {
            let s = scheme(k);
            assert_eq!(s.to_string().parse::<ProtectionScheme>().unwrap(), s);
        }
    }

    #[test]
    fn combine_due_dominates() {
        assert_eq!(combine([EccVerdict::Sdc, EccVerdict::Due, EccVerdict::Dce]), EccVerdict::Due);
        assert_eq!(combine([EccVerdict::Dce, EccVerdict::Sdc]), EccVerdict::Sdc);
        assert_eq!(combine([EccVerdict::Dce, EccVerdict::NoError]), EccVerdict::Dce);
        assert_eq!(combine([]), EccVerdict::NoError);
    }

    proptest! {
        #[test]
        fn linear_verdict_ignores_position(m in 1u32..=8, l1 in 0u32..56, l2 in 0u32..56) {
            for kind in [SchemeKind::None, SchemeKind::Parity, SchemeKind::Secded, SchemeKind::Dected] {
                let s = scheme(kind);
                prop_assert_eq!(
                    classify_field(s, ErrorPattern::new(m, l1), FieldKind::DataWord),
                    classify_field(s, ErrorPattern::new(m, l2), FieldKind::DataWord)
                );
            }
        }

        #[test]
        fn dixit_sizes_never_silent_under_interleaved_secded(m in 1u32..=4, l in 0u32..509) {
            let v = classify_data_field(scheme(SchemeKind::InterleavedSecded), ErrorPattern::new(m, l), 512, 64).unwrap();
            prop_assert_ne!(v, EccVerdict::Sdc);
        }

        #[test]
        fn interleave_conserves(ways in 1u32..8, flips in 0u32..40) {
            let parts = interleave_split(ways, flips);
            prop_assert_eq!(parts.iter().sum::<u32>(), flips);
            let max = *parts.iter().max().unwrap();
            let min = *parts.iter().min().unwrap();
            prop_assert!(max - min <= 1);
        }

        #[test]
        fn split_conserves(m in 1u32..=8, l in 0u32..505) {
            let parts = split_pattern(ErrorPattern::new(m, l), 512, 64).unwrap();
            prop_assert_eq!(parts.values().sum::<u32>(), m);
            prop_assert!(parts.len() <= 2);
            if parts.len() == 2 {
                let keys: Vec<_> = parts.keys().copied().collect();
                prop_assert_eq!(keys[1], keys[0] + 1);
            }
        }
    }
}
