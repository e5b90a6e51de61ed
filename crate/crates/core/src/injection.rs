//! Campaign sizing, fault sampling and fault application.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cache::{CacheGeometry, DataFault, FaultMeta, Hierarchy, Level, LineState, Ownership, TagFault, Activation};
use crate::ecc::{self, EccVerdict, ErrorPattern, ProtectionScheme};
use crate::error::{Error, Result};

/// Size of the population being sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Population {
    Infinite,
    Finite(u64),
}

/// Number of injections needed for margin `e` at cut-off `t` given a
/// failure-probability estimate `p`.
pub fn sample_size(e: f64, t: f64, p: f64, population: Population) -> Result<u64> {
    if !(e > 0.0 && e < 1.0) {
        return Err(Error::InvalidArgument(format!("margin {e} is not within (0, 1)")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("probability {p} is not within (0, 1)")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("cut-off {t} must be positive")));
    }
    let infinite = t * t * p * (1.0 - p) / (e * e);
    let n = match population {
        Population::Infinite => infinite,
        Population::Finite(0) => return Err(Error::InvalidArgument("population must be positive".into())),
        Population::Finite(big_n) => {
            let big_n = big_n as f64;
            big_n / (1.0 + e * e * (big_n - 1.0) / (t * t * p * (1.0 - p)))
        }
    };
    // 1.96^2 * 0.25 / 1e-4 lands a hair above 9604 in binary floating point
    let snapped = (n * 1e9).round() / 1e9;
    Ok(snapped.ceil().max(1.0) as u64)
}

/// Per-level upset shares: single bit, multi-cell (any upset touching two
/// cells, counting two-bit upsets within one word) and the within-word part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OliveiraLevel {
    pub p_1bit: f64,
    pub p_mcu: f64,
    pub p_mbu: f64,
}

impl OliveiraLevel {
    fn validate(&self, field: &str) -> Result<()> {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        if !(ok(self.p_1bit) && ok(self.p_mcu) && ok(self.p_mbu)) {
            return Err(Error::config(field, "probabilities must be within [0, 1]"));
        }
        if (self.p_1bit + self.p_mcu - 1.0).abs() > 1e-9 {
            return Err(Error::config(field, "p_1bit + p_mcu must equal 1"));
        }
        if self.p_mbu > self.p_mcu {
            return Err(Error::config(field, "p_mbu is a subset of p_mcu and cannot exceed it"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MbuDistribution {
    /// Contiguous run of `m` bits with probability `probs[m - 1]`.
    Contiguous { probs: Vec<f64> },
    /// At most two flipped bits, with cross-word and cross-line placement.
    OliveiraMcu { l1: OliveiraLevel, l2: OliveiraLevel },
}

impl MbuDistribution {
    pub fn dixit() -> Self {
        MbuDistribution::Contiguous { probs: vec![0.62, 0.25, 0.07, 0.06] }
    }

    pub fn oliveira() -> Self {
        MbuDistribution::OliveiraMcu {
            l1: OliveiraLevel { p_1bit: 0.73, p_mcu: 0.27, p_mbu: 0.075 },
            l2: OliveiraLevel { p_1bit: 0.68, p_mcu: 0.32, p_mbu: 0.06 },
        }
    }

    /// Preset name, or the mode of a custom table.
    pub fn name(&self) -> &'static str {
        if *self == MbuDistribution::dixit() {
            return "dixit";
        }
        match self {
            MbuDistribution::Contiguous { .. } => "contiguous",
            MbuDistribution::OliveiraMcu { .. } => "oliveira",
        }
    }

    /// Largest MBU size the distribution can produce.
    pub fn max_m(&self) -> u32 {
        match self {
            MbuDistribution::Contiguous { probs } => probs.len() as u32,
            MbuDistribution::OliveiraMcu { .. } => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MbuDistribution::Contiguous { probs } => {
                if probs.is_empty() || probs.len() > 32 {
                    return Err(Error::config("mbu.probs", "need between 1 and 32 entries"));
                }
                if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::config("mbu.probs", "probabilities must be within [0, 1]"));
                }
                let sum: f64 = probs.iter().sum();
                if (sum - 1.0).abs() > 1e-6 {
                    return Err(Error::config("mbu.probs", format!("probabilities sum to {sum}, not 1")));
                }
                Ok(())
            }
            MbuDistribution::OliveiraMcu { l1, l2 } => {
                l1.validate("mbu.l1")?;
                l2.validate("mbu.l2")
            }
        }
    }
}

impl FromStr for MbuDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dixit" => Ok(MbuDistribution::dixit()),
            "oliveira" => Ok(MbuDistribution::oliveira()),
            other => Err(Error::config("mbu", format!("unknown distribution `{other}` (expected dixit or oliveira)"))),
        }
    }
}

/// What a campaign strikes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    L1,
    L2,
    ControlLogic,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::L1 => "l1",
            Target::L2 => "l2",
            Target::ControlLogic => "control-logic",
        })
    }
}

pub fn validate_targets(targets: &[Target]) -> Result<()> {
    if targets.is_empty() {
        return Err(Error::config("targets", "at least one target is required"));
    }
    if targets.contains(&Target::ControlLogic) && targets.len() > 1 {
        return Err(Error::config("targets", "control-logic cannot be combined with cache levels"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Field {
    Tag,
    Data,
}

impl Field {
    pub const ALL: [Field; 2] = [Field::Tag, Field::Data];

    pub fn short(self) -> &'static str {
        match self {
            Field::Tag => "TF",
            Field::Data => "DF",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

/// One struck field of one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultSite {
    pub level: Level,
    pub set: u32,
    pub way: u32,
    pub field: Field,
    pub pattern: ErrorPattern,
}

/// A sampled upset. Cross-line MCUs produce two sites.
#[derive(Debug, Clone, PartialEq)]
pub struct Fault {
    pub cycle: u64,
    pub sites: Vec<FaultSite>,
    /// Upset size used for MBU breakdowns; MCUs count as their total bits.
    pub mbu_size: u32,
    /// Control-logic upsets bypass the ECC with a silent verdict.
    pub forced_sdc: bool,
}

impl Fault {
    pub fn field(&self) -> Field {
        self.sites[0].field
    }

    pub fn level(&self) -> Level {
        self.sites[0].level
    }
}

/// Sampling parameters shared by every draw of a campaign.
#[derive(Debug, Clone)]
pub struct DrawModel<'a> {
    pub distribution: &'a MbuDistribution,
    pub geometry: &'a CacheGeometry,
    pub targets: &'a [Target],
    /// Probability that a cache upset hits the tag field; defaults to the
    /// tag's share of the block's bits.
    pub tag_share: Option<f64>,
    /// Cycles over which upsets are spread, end exclusive.
    pub window: std::ops::Range<u64>,
}

impl DrawModel<'_> {
    pub fn tag_probability(&self) -> f64 {
        self.tag_share.unwrap_or_else(|| {
            let t = f64::from(self.geometry.tag_bits);
            t / (t + f64::from(self.geometry.data_bits()))
        })
    }

    fn level_bits(&self, level: Level) -> f64 {
        let g = self.geometry;
        g.lines(level) as f64 * f64::from(g.tag_bits + g.data_bits())
    }
}

fn pick_m(probs: &[f64], u: f64) -> u32 {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i as u32 + 1;
        }
    }
    probs.len() as u32
}

/// Linear position `k + 1` in the block array, wrapping around.
fn next_block(g: &CacheGeometry, level: Level, set: u32, way: u32) -> (u32, u32) {
    let shape = g.shape(level);
    if way + 1 < shape.ways {
        (set, way + 1)
    } else {
        ((set + 1) % shape.sets, 0)
    }
}

/// Samples one upset: time and block uniform, field weighted by width,
/// size from the configured distribution and position uniform over the
/// legal offsets.
pub fn draw_fault<R: Rng + ?Sized>(rng: &mut R, model: &DrawModel<'_>) -> Fault {
    let g = model.geometry;
    let cycle = rng.random_range(model.window.clone());

    if model.targets.contains(&Target::ControlLogic) {
        let l1 = g.lines(Level::L1);
        let total = l1 + g.lines(Level::L2);
        let k = rng.random_range(0..total);
        let (level, k) = if k < l1 { (Level::L1, k) } else { (Level::L2, k - l1) };
        let ways = u64::from(g.shape(level).ways);
        let l = rng.random_range(0..g.tag_bits);
        let site = FaultSite {
            level,
            set: (k / ways) as u32,
            way: (k % ways) as u32,
            field: Field::Tag,
            pattern: ErrorPattern::new(1, l),
        };
        return Fault { cycle, sites: vec![site], mbu_size: 1, forced_sdc: true };
    }

    let levels: Vec<Level> = model
        .targets
        .iter()
        .filter_map(|t| match t {
            Target::L1 => Some(Level::L1),
            Target::L2 => Some(Level::L2),
            Target::ControlLogic => None,
        })
        .collect();
    let level = if levels.len() == 1 {
        levels[0]
    } else {
        let total: f64 = levels.iter().map(|&l| model.level_bits(l)).sum();
        let mut u = rng.random::<f64>() * total;
        let mut chosen = *levels.last().expect("targets validated non-empty");
        for &l in &levels {
            let b = model.level_bits(l);
            if u < b {
                chosen = l;
                break;
            }
            u -= b;
        }
        chosen
    };
    let shape = g.shape(level);
    let set = rng.random_range(0..shape.sets);
    let way = rng.random_range(0..shape.ways);
    let field = if rng.random::<f64>() < model.tag_probability() { Field::Tag } else { Field::Data };
    let field_bits = match field {
        Field::Tag => g.tag_bits,
        Field::Data => g.data_bits(),
    };
    let word_bits = g.word_bits();
    let site = |set, way, m, l| FaultSite { level, set, way, field, pattern: ErrorPattern::new(m, l) };

    match model.distribution {
        MbuDistribution::Contiguous { probs } => {
            let m = pick_m(probs, rng.random()).min(field_bits);
            let l = rng.random_range(0..=field_bits - m);
            Fault { cycle, sites: vec![site(set, way, m, l)], mbu_size: m, forced_sdc: false }
        }
        MbuDistribution::OliveiraMcu { l1, l2 } => {
            let p = match level {
                Level::L1 => l1,
                Level::L2 => l2,
            };
            let u: f64 = rng.random();
            if u < p.p_1bit {
                let l = rng.random_range(0..field_bits);
                return Fault { cycle, sites: vec![site(set, way, 1, l)], mbu_size: 1, forced_sdc: false };
            }
            if u < p.p_1bit + p.p_mbu {
                // two bits inside one codeword span
                let l = match field {
                    Field::Tag => rng.random_range(0..field_bits - 1),
                    Field::Data => {
                        let w = rng.random_range(0..g.words_per_line());
                        w * word_bits + rng.random_range(0..word_bits - 1)
                    }
                };
                return Fault { cycle, sites: vec![site(set, way, 2, l)], mbu_size: 2, forced_sdc: false };
            }
            let (nset, nway) = next_block(g, level, set, way);
            let sites = match field {
                Field::Tag => {
                    let l = rng.random_range(0..field_bits);
                    vec![site(set, way, 1, l), site(nset, nway, 1, l)]
                }
                Field::Data => {
                    let w = rng.random_range(0..g.words_per_line());
                    if w + 1 < g.words_per_line() {
                        vec![site(set, way, 2, w * word_bits + word_bits - 1)]
                    } else {
                        vec![site(set, way, 1, field_bits - 1), site(nset, nway, 1, 0)]
                    }
                }
            };
            Fault { cycle, sites, mbu_size: 2, forced_sdc: false }
        }
    }
}

/// Snapshot of a struck block, for the injection log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InjectionRecord {
    pub level: Level,
    pub set: u32,
    pub way: u32,
    pub field: Field,
    pub m: u32,
    pub l: u32,
    /// Ownership before any tag remap.
    pub ownership: Ownership,
    pub state: LineState,
    /// Field-level ECC verdict for the whole pattern.
    pub verdict: EccVerdict,
}

/// Records `site` on the hierarchy as fault number `site_id`.
///
/// Silent tag faults rewrite the stored tag immediately, so the block
/// answers to its new address from here on.
pub fn inject(
    hier: &mut Hierarchy,
    site: &FaultSite,
    scheme: ProtectionScheme,
    forced_sdc: bool,
    site_id: u8,
) -> Result<InjectionRecord> {
    let g = *hier.geometry();
    let map = *hier.address_map();
    let field_bits = match site.field {
        Field::Tag => g.tag_bits,
        Field::Data => g.data_bits(),
    };
    site.pattern.check_bounds(field_bits)?;
    let shape = g.shape(site.level);
    if site.set >= shape.sets || site.way >= shape.ways {
        return Err(Error::Bounds(format!("block ({}, {}) outside {} x {}", site.set, site.way, shape.sets, shape.ways)));
    }
    let line = *hier.array(site.level).line(site.set, site.way);
    let ownership = line.census_owner();
    let verdict = match (site.field, forced_sdc) {
        (Field::Tag, true) => EccVerdict::Sdc,
        (Field::Tag, false) => ecc::classify_flips(scheme, site.pattern.m),
        (Field::Data, _) => ecc::classify_data_field(scheme, site.pattern, field_bits, g.word_bits())?,
    };
    let record = InjectionRecord {
        level: site.level,
        set: site.set,
        way: site.way,
        field: site.field,
        m: site.pattern.m,
        l: site.pattern.l,
        ownership,
        state: line.state,
        verdict,
    };
    let meta = FaultMeta::from(site.pattern);
    match site.field {
        Field::Tag => {
            if line.tag_fault.is_some() {
                return Err(Error::AlreadyFaulty);
            }
            let remapped = verdict == EccVerdict::Sdc;
            if remapped {
                hier.array_mut(site.level).apply_tag_flip(site.set, site.way, site.pattern, g.tag_bits, &map)?;
            }
            hier.array_mut(site.level).line_mut(site.set, site.way).tag_fault = Some(TagFault {
                meta,
                verdict,
                original_tag: line.tag,
                remapped,
                site: site_id,
                dl_booked: false,
                activation: Activation::Dormant,
            });
        }
        Field::Data => {
            if line.data_fault.is_some() {
                return Err(Error::AlreadyFaulty);
            }
            hier.array_mut(site.level).line_mut(site.set, site.way).data_fault = Some(DataFault::new(meta, site_id));
        }
    }
    Ok(record)
}
