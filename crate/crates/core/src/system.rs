//! From controller reboots and data loss to storage-system DU and DL.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RedundancyMode {
    Single,
    DualInitiated,
}

impl fmt::Display for RedundancyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RedundancyMode::Single => "single",
            RedundancyMode::DualInitiated => "dual",
        })
    }
}

impl FromStr for RedundancyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "single" => Ok(RedundancyMode::Single),
            "dual" | "dual-initiated" => Ok(RedundancyMode::DualInitiated),
            other => Err(Error::config("redundancy.mode", format!("unknown mode `{other}` (expected single or dual)"))),
        }
    }
}

/// Whether the two controllers of a dual system see the same upset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualFaults {
    /// Each controller draws its own upsets.
    Independent,
    /// Both controllers replay one upset stream.
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RedundancyConfig {
    pub mode: RedundancyMode,
    /// Outage per controller reboot.
    pub reboot_seconds: f64,
    /// Upsets per controller per year.
    pub seu_per_year: f64,
    pub dual_faults: DualFaults,
}

impl Default for RedundancyConfig {
    fn default() -> Self {
        RedundancyConfig {
            mode: RedundancyMode::Single,
            reboot_seconds: 120.0,
            seu_per_year: 1000.0,
            dual_faults: DualFaults::Independent,
        }
    }
}

impl RedundancyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reboot_seconds > 0.0 && self.reboot_seconds.is_finite()) {
            return Err(Error::config("redundancy.reboot_seconds", "must be positive"));
        }
        if !(self.seu_per_year >= 0.0 && self.seu_per_year.is_finite()) {
            return Err(Error::config("redundancy.seu_per_year", "must be non-negative"));
        }
        Ok(())
    }

    /// Number of controller streams the mode consumes.
    pub fn streams(&self) -> usize {
        match self.mode {
            RedundancyMode::Single => 1,
            RedundancyMode::DualInitiated => 2,
        }
    }
}

/// What one controller did in one run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControllerRun {
    /// Wall-clock second at which the controller rebooted, if it did.
    pub reboot_at: Option<f64>,
    pub dl_bytes: u64,
    pub dl_events: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SystemStats {
    pub runs: u64,
    pub du_seconds: f64,
    pub dl_bytes: u64,
    pub du_incidences: u64,
    pub dl_incidences: u64,
}

impl SystemStats {
    pub fn merge(&mut self, other: &SystemStats) {
        self.runs += other.runs;
        self.du_seconds += other.du_seconds;
        self.dl_bytes += other.dl_bytes;
        self.du_incidences += other.du_incidences;
        self.dl_incidences += other.dl_incidences;
    }
}

fn overlap(a: f64, b: f64, len: f64) -> f64 {
    ((a.min(b) + len) - a.max(b)).max(0.0)
}

/// Lifts per-run controller results to system DU and DL.
///
/// `streams[c][r]` is controller `c` in run `r`. A single controller is
/// down for the whole reboot; a dual-initiated pair is down only while
/// both reboot windows overlap. Data loss is never absorbed by the partner.
/// With shared faults both controllers replay stream 0 and its loss is
/// counted once.
pub fn apply_redundancy(cfg: &RedundancyConfig, streams: &[Vec<ControllerRun>]) -> Result<SystemStats> {
    let want = match (cfg.mode, cfg.dual_faults) {
        (RedundancyMode::DualInitiated, DualFaults::Independent) => 2,
        _ => 1,
    };
    if streams.len() != want {
        return Err(Error::InvalidArgument(format!(
            "{} redundancy needs {want} controller stream(s), got {}",
            cfg.mode,
            streams.len()
        )));
    }
    if want == 2 && streams[0].len() != streams[1].len() {
        return Err(Error::InvalidArgument("controller streams differ in length".into()));
    }
    let mut s = SystemStats { runs: streams[0].len() as u64, ..Default::default() };
    for (r, a) in streams[0].iter().enumerate() {
        let b = streams.get(1).map_or(a, |other| &other[r]);
        match cfg.mode {
            RedundancyMode::Single => {
                if a.reboot_at.is_some() {
                    s.du_incidences += 1;
                    s.du_seconds += cfg.reboot_seconds;
                }
            }
            RedundancyMode::DualInitiated => {
                if let (Some(ta), Some(tb)) = (a.reboot_at, b.reboot_at) {
                    let o = overlap(ta, tb, cfg.reboot_seconds);
                    if o > 0.0 {
                        s.du_incidences += 1;
                        s.du_seconds += o;
                    }
                }
            }
        }
        s.dl_bytes += a.dl_bytes;
        s.dl_incidences += a.dl_events;
        if want == 2 {
            s.dl_bytes += b.dl_bytes;
            s.dl_incidences += b.dl_events;
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annualized {
    pub du_minutes_per_year: f64,
    pub dl_bytes_per_year: f64,
}

/// Scales per-run averages to a year with `events_per_year` upsets.
pub fn annualize(stats: &SystemStats, n: u64, events_per_year: f64) -> Result<Annualized> {
    if n == 0 {
        return Err(Error::InvalidArgument("cannot annualize zero injections".into()));
    }
    let n = n as f64;
    Ok(Annualized {
        du_minutes_per_year: stats.du_seconds / n * events_per_year / 60.0,
        dl_bytes_per_year: stats.dl_bytes as f64 / n * events_per_year,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(reboot: Option<f64>, dl: u64) -> ControllerRun {
        ControllerRun { reboot_at: reboot, dl_bytes: dl, dl_events: u64::from(dl > 0) }
    }

    #[test]
    fn single_reboots_add_up() {
        let cfg = RedundancyConfig::default();
        let a = vec![run(Some(1.0), 0), run(None, 8), run(Some(3.0), 0), run(Some(9.0), 64)];
        let s = apply_redundancy(&cfg, &[a]).unwrap();
        assert_eq!(s.du_seconds, 360.0);
        assert_eq!(s.du_incidences, 3);
        assert_eq!(s.dl_bytes, 72);
    }

    #[test]
    fn dual_needs_overlap() {
        let cfg = RedundancyConfig { mode: RedundancyMode::DualInitiated, ..Default::default() };
        let a = vec![run(Some(0.0), 8), run(Some(0.0), 0)];
        let b = vec![run(Some(500.0), 0), run(Some(100.0), 16)];
        let s = apply_redundancy(&cfg, &[a, b]).unwrap();
        assert_eq!(s.du_seconds, 20.0);
        assert_eq!(s.dl_bytes, 24);
        assert!(apply_redundancy(&cfg, &[vec![]]).is_err());
    }

    #[test]
    fn shared_stream_keeps_single_loss() {
        let a = vec![run(Some(5.0), 40), run(None, 8)];
        let single = apply_redundancy(&RedundancyConfig::default(), &[a.clone()]).unwrap();
        let cfg = RedundancyConfig { mode: RedundancyMode::DualInitiated, dual_faults: DualFaults::Shared, ..Default::default() };
        let dual = apply_redundancy(&cfg, &[a]).unwrap();
        assert_eq!(dual.dl_bytes, single.dl_bytes);
        assert!(dual.du_seconds <= single.du_seconds);
    }

    #[test]
    fn annualize_examples() {
        let s = SystemStats { du_seconds: 500.0 * 120.0, ..Default::default() };
        let a = annualize(&s, 10_000, 1000.0).unwrap();
        assert!((a.du_minutes_per_year - 100.0).abs() < 1e-9);
        let z = annualize(&SystemStats::default(), 9604, 1000.0).unwrap();
        assert_eq!(z.dl_bytes_per_year, 0.0);
        let d = annualize(&s, 10_000, 2000.0).unwrap();
        assert_eq!(d.du_minutes_per_year, 2.0 * a.du_minutes_per_year);
        assert!(annualize(&s, 0, 1000.0).is_err());
    }
}
