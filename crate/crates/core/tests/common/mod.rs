#![allow(dead_code)]

use ssvf::campaign::CampaignReport;
use ssvf::config::{MbuChoice, SampleCount};
use ssvf::ecc::{EccVerdict, ProtectionScheme, SchemeKind};
use ssvf::injection::MbuDistribution;
use ssvf::{Campaign, RunConfig};

pub const DATA_BITS: u32 = 512;
pub const WORD_BITS: u32 = 64;

/// Correctable and detectable flip counts of one codeword, independent of
/// the library's rule table.
fn capability(kind: SchemeKind) -> Option<(u32, u32)> {
    match kind {
        SchemeKind::None => None,
        SchemeKind::Parity | SchemeKind::InterleavedParity => Some((0, 1)),
        SchemeKind::Secded | SchemeKind::InterleavedSecded => Some((1, 2)),
        SchemeKind::Dected => Some((2, 3)),
    }
}

fn codeword_verdict(kind: SchemeKind, flips: u32) -> EccVerdict {
    if flips == 0 {
        return EccVerdict::NoError;
    }
    match capability(kind) {
        None => EccVerdict::Sdc,
        Some((0, _)) => {
            if flips % 2 == 1 {
                EccVerdict::Due
            } else {
                EccVerdict::Sdc
            }
        }
        Some((t, _)) if flips <= t => EccVerdict::Dce,
        Some((_, d)) if flips <= d => EccVerdict::Due,
        Some(_) => EccVerdict::Sdc,
    }
}

fn severity(v: EccVerdict) -> u8 {
    match v {
        EccVerdict::NoError => 0,
        EccVerdict::Dce => 1,
        EccVerdict::Sdc => 2,
        EccVerdict::Due => 3,
    }
}

/// Flips bits `l..l+m` of a `field_bits` field, assigns every bit to its
/// word and, within the word, to subcode `bit % ways`, and takes the most
/// severe codeword verdict.
pub fn oracle_verdict(scheme: ProtectionScheme, m: u32, l: u32, field_bits: u32, word_bits: u32) -> EccVerdict {
    let ways = scheme.interleave_ways();
    let words = (field_bits / word_bits) as usize;
    let mut counts = vec![vec![0u32; ways as usize]; words];
    let mut flipped = vec![false; field_bits as usize];
    for b in l..l + m {
        flipped[b as usize] = true;
    }
    for (b, f) in flipped.iter().enumerate() {
        if *f {
            let b = b as u32;
            counts[(b / word_bits) as usize][((b % word_bits) % ways) as usize] += 1;
        }
    }
    counts
        .iter()
        .flatten()
        .map(|&c| codeword_verdict(scheme.kind(), c))
        .max_by_key(|v| severity(*v))
        .unwrap_or(EccVerdict::NoError)
}

pub fn config(scheme: SchemeKind, mbu: MbuDistribution, n: u64, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.scheme = ProtectionScheme::standard(scheme);
    cfg.mbu = MbuChoice(mbu);
    cfg.n = SampleCount::Fixed(n);
    cfg.seed = seed;
    cfg
}

pub fn run(cfg: &RunConfig) -> CampaignReport {
    Campaign::prepare(cfg).expect("valid configuration").run().expect("campaign runs")
}
