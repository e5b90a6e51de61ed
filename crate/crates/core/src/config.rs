//! Run configuration: one TOML file, validated before anything runs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cache::{AddressMap, CacheGeometry};
use crate::ecc::{ProtectionScheme, SchemeKind};
use crate::error::{Error, Result};
use crate::injection::{self, MbuDistribution, Population, Target};
use crate::ser_logic::LogicSerInputs;
use crate::system::RedundancyConfig;
use crate::tracker::ManifestationParams;
use crate::workload::{AccessModel, SyntheticSpec};

/// Injection count, fixed or sized from the sampling inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleCount {
    Fixed(u64),
    Auto,
}

impl FromStr for SampleCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(SampleCount::Auto);
        }
        s.parse()
            .map(SampleCount::Fixed)
            .map_err(|_| Error::config("n", format!("`{s}` is neither a count nor `auto`")))
    }
}

impl fmt::Display for SampleCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleCount::Fixed(n) => write!(f, "{n}"),
            SampleCount::Auto => f.write_str("auto"),
        }
    }
}

impl Serialize for SampleCount {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SampleCount::Fixed(n) => s.serialize_u64(*n),
            SampleCount::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for SampleCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(SampleCount::Fixed(n)),
            Raw::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Inputs of the sample-size formula used by `n = "auto"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSizing {
    pub margin: f64,
    pub t: f64,
    pub p: f64,
    /// Population size; absent means infinite.
    pub population: Option<u64>,
}

impl Default for SampleSizing {
    fn default() -> Self {
        SampleSizing { margin: 0.01, t: 1.96, p: 0.5, population: None }
    }
}

/// Upset-size distribution: a preset name or an explicit table.
#[derive(Debug, Clone, PartialEq)]
pub struct MbuChoice(pub MbuDistribution);

impl Serialize for MbuChoice {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0 == MbuDistribution::dixit() {
            s.serialize_str("dixit")
        } else if self.0 == MbuDistribution::oliveira() {
            s.serialize_str("oliveira")
        } else {
            self.0.serialize(s)
        }
    }
}

impl<'de> Deserialize<'de> for MbuChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Name(String),
            Table(MbuDistribution),
        }
        match Raw::deserialize(d)? {
            Raw::Name(n) => n.parse().map(MbuChoice).map_err(serde::de::Error::custom),
            Raw::Table(t) => Ok(MbuChoice(t)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum WorkloadSource {
    Synthetic,
    Trace(PathBuf),
}

impl TryFrom<String> for WorkloadSource {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::config("workload.source", "must be `synthetic` or a trace path"));
        }
        Ok(if s == "synthetic" { WorkloadSource::Synthetic } else { WorkloadSource::Trace(PathBuf::from(s)) })
    }
}

impl From<WorkloadSource> for String {
    fn from(w: WorkloadSource) -> String {
        match w {
            WorkloadSource::Synthetic => "synthetic".into(),
            WorkloadSource::Trace(p) => p.display().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub source: WorkloadSource,
    /// Requests simulated; traces are truncated to this many records.
    pub requests: usize,
    /// Leading requests that only warm the caches.
    pub warmup_requests: usize,
    pub synthetic: SyntheticSpec,
    pub access: AccessModel,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            source: WorkloadSource::Synthetic,
            requests: 160,
            warmup_requests: 60,
            synthetic: SyntheticSpec::default(),
            access: AccessModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Also write every tracked event to `events.csv`.
    pub event_log: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("ssvf-out"), event_log: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub n: SampleCount,
    pub workers: usize,
    pub scheme: ProtectionScheme,
    pub mbu: MbuChoice,
    pub targets: Vec<Target>,
    /// Probability that a cache upset lands in the tag; defaults to the
    /// tag's share of block bits.
    pub tag_share: Option<f64>,
    pub sample: SampleSizing,
    pub geometry: CacheGeometry,
    pub address_map: AddressMap,
    pub workload: WorkloadConfig,
    pub redundancy: RedundancyConfig,
    pub manifestation: ManifestationParams,
    pub ser: LogicSerInputs,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            n: SampleCount::Fixed(1000),
            workers: 1,
            scheme: ProtectionScheme::standard(SchemeKind::Secded),
            mbu: MbuChoice(MbuDistribution::dixit()),
            targets: vec![Target::L1, Target::L2],
            tag_share: None,
            sample: SampleSizing::default(),
            geometry: CacheGeometry::default(),
            address_map: AddressMap::default(),
            workload: WorkloadConfig::default(),
            redundancy: RedundancyConfig::default(),
            manifestation: ManifestationParams::default(),
            ser: LogicSerInputs::default(),
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration is always representable")
    }

    /// Checks every field; the first problem is reported with its key.
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        if self.n == SampleCount::Fixed(0) {
            return Err(Error::config("n", "must be at least 1"));
        }
        self.geometry.validate()?;
        self.address_map.validate()?;
        let g = &self.geometry;
        let addr_bits = g.tag_bits + g.line_bytes.trailing_zeros() + g.l1.sets.min(g.l2.sets).trailing_zeros();
        if addr_bits < 64 && self.address_map.phys_bytes > 1u64 << addr_bits {
            return Err(Error::config("address_map.phys_bytes", "exceeds what the tag width can address"));
        }
        self.mbu.0.validate()?;
        injection::validate_targets(&self.targets)?;
        if let Some(s) = self.tag_share {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::config("tag_share", "must be within [0, 1]"));
            }
        }
        self.workload.synthetic.validate()?;
        self.workload.access.validate()?;
        if self.workload.requests == 0 {
            return Err(Error::config("workload.requests", "must be at least 1"));
        }
        if self.workload.warmup_requests >= self.workload.requests {
            return Err(Error::config("workload.warmup_requests", "must be smaller than workload.requests"));
        }
        self.redundancy.validate()?;
        self.manifestation.validate()?;
        self.ser.validate()?;
        self.resolve_n()?;
        Ok(())
    }

    pub fn resolve_n(&self) -> Result<u64> {
        match self.n {
            SampleCount::Fixed(n) => Ok(n),
            SampleCount::Auto => {
                let pop = self.sample.population.map_or(Population::Infinite, Population::Finite);
                injection::sample_size(self.sample.margin, self.sample.t, self.sample.p, pop)
                    .map_err(|e| Error::config("sample", e.to_string()))
            }
        }
    }

    /// Identity of the simulated machine, used to refuse comparing unlike
    /// runs.
    pub fn geometry_id(&self) -> String {
        let g = &self.geometry;
        format!(
            "line{}-word{}-tag{}-l1:{}x{}-l2:{}x{}",
            g.line_bytes, g.word_bytes, g.tag_bits, g.l1.sets, g.l1.ways, g.l2.sets, g.l2.ways
        )
    }

    pub fn workload_id(&self) -> String {
        let w = &self.workload;
        match &w.source {
            WorkloadSource::Synthetic => {
                let s = &w.synthetic;
                format!(
                    "synthetic:{:?}:ia{}us:size{}kb:w{}:req{}:warm{}:os{}:seed{}",
                    s.randomness, s.inter_arrival_us, s.size_kb, s.write_fraction, w.requests, w.warmup_requests,
                    w.access.os_overhead_ratio, self.seed
                )
                .to_lowercase()
            }
            WorkloadSource::Trace(p) => format!(
                "trace:{}:req{}:warm{}:os{}",
                p.display(),
                w.requests,
                w.warmup_requests,
                w.access.os_overhead_ratio
            ),
        }
    }
}
