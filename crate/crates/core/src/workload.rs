//! Storage request streams and their expansion into cache accesses.
//!
//! Requests come either from the synthetic generator (exponential
//! inter-arrival times and sizes, sequential or uniformly random addresses)
//! or from an SPC-style CSV trace. [`Expander`] turns each request into
//! word-granular user-payload accesses interleaved with OS-overhead
//! accesses, stamped with simulation ticks.

use std::io::BufRead;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::cache::{AddressMap, MemOp};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

/// Storage block size used for LBAs.
pub const BLOCK_BYTES: u64 = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReqOp {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Request {
    /// Arrival time in seconds.
    pub timestamp: f64,
    pub op: ReqOp,
    pub lba: u64,
    pub size_bytes: u64,
    pub asu: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Randomness {
    Sequential,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub inter_arrival_us: f64,
    pub size_kb: f64,
    pub randomness: Randomness,
    pub write_fraction: f64,
    /// Size of the simulated volume in blocks.
    pub storage_blocks: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            inter_arrival_us: 100.0,
            size_kb: 4.0,
            randomness: Randomness::Random,
            write_fraction: 0.6,
            storage_blocks: 1 << 31,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.inter_arrival_us > 0.0 && self.inter_arrival_us.is_finite()) {
            return Err(Error::config("workload.inter_arrival_us", "must be positive"));
        }
        if !(self.size_kb > 0.0 && self.size_kb.is_finite()) {
            return Err(Error::config("workload.size_kb", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.write_fraction) {
            return Err(Error::config("workload.write_fraction", "must be within [0, 1]"));
        }
        if self.storage_blocks < 1 << 12 {
            return Err(Error::config("workload.storage_blocks", "must be at least 4096"));
        }
        Ok(())
    }
}

/// Generates `count` synthetic requests. Arrival gaps and sizes are
/// exponential; sizes are rounded to whole blocks (at least one).
pub fn gen_synthetic(spec: &SyntheticSpec, seed: u64, count: usize) -> Result<Vec<Request>> {
    spec.validate()?;
    let mut rng = seed::rng(seed, Stream::Workload, 0);
    let gap = Exp::new(1.0 / spec.inter_arrival_us).expect("validated rate");
    let size = Exp::new(1.0 / (spec.size_kb * 1024.0)).expect("validated rate");
    let mut t_us = 0.0;
    let mut next_lba = rng.random_range(0..spec.storage_blocks / 2);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        t_us += gap.sample(&mut rng);
        let bytes: f64 = size.sample(&mut rng);
        let blocks = ((bytes / BLOCK_BYTES as f64).round() as u64).clamp(1, spec.storage_blocks / 2);
        let lba = match spec.randomness {
            Randomness::Sequential => {
                if next_lba + blocks > spec.storage_blocks {
                    next_lba = 0;
                }
                next_lba
            }
            Randomness::Random => rng.random_range(0..=spec.storage_blocks - blocks),
        };
        next_lba = lba + blocks;
        let op = if rng.random::<f64>() < spec.write_fraction { ReqOp::Write } else { ReqOp::Read };
        out.push(Request { timestamp: t_us * 1e-6, op, lba, size_bytes: blocks * BLOCK_BYTES, asu: 0 });
    }
    Ok(out)
}

/// Reads a trace of `ASU,LBA,size_bytes,opcode,timestamp_seconds` records.
/// Opcodes are `R` or `W` in either case; timestamps must not decrease.
pub fn parse_trace(path: &Path) -> Result<Vec<Request>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_trace_from(file, &path.display().to_string())
}

/// [`parse_trace`] over any reader; `name` labels diagnostics.
pub fn parse_trace_from<R: std::io::Read>(reader: R, name: &str) -> Result<Vec<Request>> {
    let mut out: Vec<Request> = Vec::new();
    for (i, text) in std::io::BufReader::new(reader).lines().enumerate() {
        let line = i as u64 + 1;
        let bad = |reason: String| Error::Trace { path: name.to_string(), line, reason };
        let text = text.map_err(|e| bad(e.to_string()))?;
        let text = text.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let record: Vec<&str> = text.split(',').map(str::trim).collect();
        if record.len() < 5 {
            return Err(bad(format!("expected 5 fields, found {}", record.len())));
        }
        let asu: u32 = record[0].parse().map_err(|_| bad(format!("bad ASU `{}`", &record[0])))?;
        let lba: u64 = record[1].parse().map_err(|_| bad(format!("bad LBA `{}`", &record[1])))?;
        let size: i64 = record[2].parse().map_err(|_| bad(format!("bad size `{}`", &record[2])))?;
        if size <= 0 {
            return Err(bad(format!("size must be positive, got {size}")));
        }
        let op = match record[3].to_ascii_uppercase().as_str() {
            "R" => ReqOp::Read,
            "W" => ReqOp::Write,
            other => return Err(bad(format!("bad opcode `{other}`"))),
        };
        let timestamp: f64 = record[4].parse().map_err(|_| bad(format!("bad timestamp `{}`", &record[4])))?;
        if !timestamp.is_finite() || timestamp < 0.0 {
            return Err(bad(format!("bad timestamp `{}`", &record[4])));
        }
        if let Some(prev) = out.last() {
            if timestamp < prev.timestamp {
                return Err(bad(format!("timestamp {timestamp} is earlier than the previous record")));
            }
        }
        out.push(Request { timestamp, op, lba, size_bytes: size as u64, asu });
    }
    Ok(out)
}

/// Where user payload lands in the user-buffer region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    /// Buffer offset follows the request's byte address, modulo the region.
    LbaMapped,
    /// Consecutive requests fill the buffer as a ring.
    Ring,
}

/// Parameters of the request-to-access expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccessModel {
    /// OS accesses issued per user word access.
    pub os_overhead_ratio: f64,
    pub placement: Placement,
    /// Ticks per second of request time.
    pub accesses_per_second: f64,
    /// Bytes of OS data touched most of the time.
    pub os_hot_bytes: u64,
    /// Share of OS accesses that go to the hot set.
    pub os_hot_share: f64,
    pub os_write_share: f64,
    pub os_update_share: f64,
}

impl Default for AccessModel {
    fn default() -> Self {
        AccessModel {
            os_overhead_ratio: 1.0,
            placement: Placement::LbaMapped,
            accesses_per_second: 1e9,
            os_hot_bytes: 96 * 1024,
            os_hot_share: 0.9,
            os_write_share: 0.3,
            os_update_share: 0.02,
        }
    }
}

impl AccessModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.os_overhead_ratio >= 0.0 && self.os_overhead_ratio.is_finite()) {
            return Err(Error::config("workload.os_overhead_ratio", "must be non-negative"));
        }
        if !(self.accesses_per_second > 0.0 && self.accesses_per_second.is_finite()) {
            return Err(Error::config("workload.accesses_per_second", "must be positive"));
        }
        if self.os_hot_bytes < 64 {
            return Err(Error::config("workload.os_hot_bytes", "must be at least one line"));
        }
        for (v, name) in [
            (self.os_hot_share, "workload.os_hot_share"),
            (self.os_write_share, "workload.os_write_share"),
            (self.os_update_share, "workload.os_update_share"),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(name, "must be within [0, 1]"));
            }
        }
        if self.os_write_share + self.os_update_share > 1.0 {
            return Err(Error::config("workload.os_update_share", "write and update shares exceed 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Origin {
    UserPayload,
    OsOverhead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessEvent {
    pub cycle: u64,
    pub addr: u64,
    pub op: MemOp,
    pub origin: Origin,
}

/// Stateful request expander; the tick cursor and OS access draws carry
/// across requests.
#[derive(Debug, Clone)]
pub struct Expander {
    model: AccessModel,
    map: AddressMap,
    word_bytes: u64,
    line_bytes: u64,
    rng: ChaCha8Rng,
    cursor: u64,
    os_credit: f64,
    ring_pos: u64,
}

impl Expander {
    pub fn new(model: AccessModel, map: AddressMap, word_bytes: u32, line_bytes: u32, seed: u64) -> Self {
        Expander {
            model,
            map,
            word_bytes: u64::from(word_bytes),
            line_bytes: u64::from(line_bytes),
            rng: seed::rng(seed, Stream::OsAccesses, 0),
            cursor: 0,
            os_credit: 0.0,
            ring_pos: 0,
        }
    }

    /// Tick of the next access.
    pub fn cursor(&self) -> u64 {
        self.cursor
    }

    /// Offset of the request's first byte within the user region.
    fn user_offset(&self, req: &Request) -> u64 {
        let region = self.map.user_range();
        let len = region.end - region.start;
        let off = match self.model.placement {
            Placement::LbaMapped => {
                let asu_off = u64::from(req.asu).wrapping_mul(0x1_0000_0000);
                asu_off.wrapping_add(req.lba.wrapping_mul(BLOCK_BYTES)) % len
            }
            Placement::Ring => self.ring_pos % len,
        };
        off - off % self.word_bytes
    }

    fn os_access(&mut self) -> (u64, MemOp) {
        let region = self.map.os_range();
        let len = region.end - region.start;
        let span = if self.rng.random::<f64>() < self.model.os_hot_share { self.model.os_hot_bytes.min(len) } else { len };
        let u: f64 = self.rng.random();
        let op = if u < self.model.os_update_share {
            MemOp::UpdateLine
        } else if u < self.model.os_update_share + self.model.os_write_share {
            MemOp::Write
        } else {
            MemOp::Read
        };
        let words = span / self.word_bytes;
        let mut addr = region.start + self.rng.random_range(0..words) * self.word_bytes;
        if op == MemOp::UpdateLine {
            addr -= addr % self.line_bytes;
        }
        (addr, op)
    }

    /// Appends the accesses for one request to `out`.
    pub fn expand(&mut self, req: &Request, out: &mut Vec<AccessEvent>) {
        let arrival = (req.timestamp * self.model.accesses_per_second).round() as u64;
        self.cursor = self.cursor.max(arrival);
        let region = self.map.user_range();
        let len = region.end - region.start;
        let base = self.user_offset(req);
        let op = match req.op {
            ReqOp::Read => MemOp::Read,
            ReqOp::Write => MemOp::Write,
        };
        let words = req.size_bytes.div_ceil(self.word_bytes).max(1);
        for w in 0..words {
            let off = (base + w * self.word_bytes) % len;
            out.push(AccessEvent { cycle: self.cursor, addr: region.start + off, op, origin: Origin::UserPayload });
            self.cursor += 1;
            self.os_credit += self.model.os_overhead_ratio;
            while self.os_credit >= 1.0 {
                self.os_credit -= 1.0;
                let (addr, op) = self.os_access();
                out.push(AccessEvent { cycle: self.cursor, addr, op, origin: Origin::OsOverhead });
                self.cursor += 1;
            }
        }
        self.ring_pos += words * self.word_bytes;
    }
}

/// Expands a whole request stream.
pub fn expand_all(requests: &[Request], expander: &mut Expander) -> Vec<AccessEvent> {
    let mut out = Vec::new();
    for r in requests {
        expander.expand(r, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn expander(ratio: f64) -> Expander {
        let model = AccessModel { os_overhead_ratio: ratio, ..Default::default() };
        Expander::new(model, AddressMap::default(), 8, 64, 1)
    }

    #[test]
    fn spc_record_parses() {
        let reqs = parse_trace_from("0,20941264,8192,W,0.551706\n".as_bytes(), "t").unwrap();
        assert_eq!(
            reqs,
            vec![Request { timestamp: 0.551706, op: ReqOp::Write, lba: 20941264, size_bytes: 8192, asu: 0 }]
        );
    }

    #[test]
    fn empty_trace() {
        assert!(parse_trace_from("".as_bytes(), "t").unwrap().is_empty());
    }

    #[test]
    fn bad_opcode_names_line() {
        let err = parse_trace_from("0,1,512,r,0.1\n0,2,512,X,0.2\n".as_bytes(), "t").unwrap_err();
        match err {
            Error::Trace { line, reason, .. } => {
                assert_eq!(line, 2);
                assert!(reason.contains('X'));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn negative_size_rejected() {
        assert!(parse_trace_from("0,1,-512,R,0.1\n".as_bytes(), "t").is_err());
        assert!(parse_trace_from("0,1,512,R,0.2\n0,1,512,R,0.1\n".as_bytes(), "t").is_err());
    }

    #[test]
    fn eight_kb_write_touches_128_lines() {
        let mut e = expander(0.0);
        let mut out = Vec::new();
        let req = Request { timestamp: 0.0, op: ReqOp::Write, lba: 16, size_bytes: 8192, asu: 0 };
        e.expand(&req, &mut out);
        assert!(out.iter().all(|a| a.origin == Origin::UserPayload && a.op == MemOp::Write));
        assert_eq!(out.len() as u64 * 8, 8192);
        let mut lines: Vec<u64> = out.iter().map(|a| a.addr / 64).collect();
        lines.dedup();
        assert_eq!(lines.len(), 128);
    }

    #[test]
    fn overhead_ratio_adds_os_accesses() {
        let mut e = expander(2.0);
        let mut out = Vec::new();
        let req = Request { timestamp: 0.0, op: ReqOp::Read, lba: 0, size_bytes: 4096, asu: 0 };
        e.expand(&req, &mut out);
        let os = out.iter().filter(|a| a.origin == Origin::OsOverhead).count();
        assert_eq!(os, 1024);
        let map = AddressMap::default();
        assert!(out
            .iter()
            .filter(|a| a.origin == Origin::OsOverhead)
            .all(|a| map.os_range().contains(&a.addr)));
        assert!(out.windows(2).all(|w| w[0].cycle < w[1].cycle));
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec::default();
        assert_eq!(gen_synthetic(&spec, 9, 100).unwrap(), gen_synthetic(&spec, 9, 100).unwrap());
        assert_ne!(gen_synthetic(&spec, 9, 100).unwrap(), gen_synthetic(&spec, 10, 100).unwrap());
    }
}
