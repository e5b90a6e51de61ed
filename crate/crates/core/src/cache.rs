//! Two-level write-back cache hierarchy with per-block fault metadata.
//!
//! The hierarchy is a set-associative L1 backed by an inclusive L2, both
//! write-back with LRU replacement. Coherence is modelled only as the MESI
//! state alphabet; there is a single access stream and no snoop traffic.
//!
//! Every block carries at most one tag fault and one data fault. Fault
//! consequences are not decided here: whenever an access touches a faulty
//! block the hierarchy hands the block to a [`LineObserver`] *before*
//! applying the state transition, so the observer sees the prior state.

use serde::{Deserialize, Serialize};

use crate::ecc::{EccVerdict, ErrorPattern};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    L1,
    L2,
}

impl Level {
    pub const ALL: [Level; 2] = [Level::L1, Level::L2];

    pub fn name(self) -> &'static str {
        match self {
            Level::L1 => "L1",
            Level::L2 => "L2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelShape {
    pub sets: u32,
    pub ways: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CacheGeometry {
    pub line_bytes: u32,
    pub word_bytes: u32,
    pub tag_bits: u32,
    pub l1: LevelShape,
    pub l2: LevelShape,
}

impl Default for CacheGeometry {
    fn default() -> Self {
        CacheGeometry {
            line_bytes: 64,
            word_bytes: 8,
            tag_bits: 32,
            l1: LevelShape { sets: 64, ways: 8 },
            l2: LevelShape { sets: 512, ways: 8 },
        }
    }
}

impl CacheGeometry {
    /// The controller processor of the reference machine: 128 KiB 8-way L1,
    /// 2 MiB 8-way shared L2.
    pub fn reference_machine() -> Self {
        CacheGeometry {
            l1: LevelShape { sets: 256, ways: 8 },
            l2: LevelShape { sets: 4096, ways: 8 },
            ..CacheGeometry::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pow2 = |v: u32, field: &str| {
            if v == 0 || !v.is_power_of_two() {
                Err(Error::config(field, format!("{v} is not a positive power of two")))
            } else {
                Ok(())
            }
        };
        pow2(self.line_bytes, "geometry.line_bytes")?;
        pow2(self.word_bytes, "geometry.word_bytes")?;
        pow2(self.l1.sets, "geometry.l1.sets")?;
        pow2(self.l2.sets, "geometry.l2.sets")?;
        if self.line_bytes % self.word_bytes != 0 {
            return Err(Error::config("geometry.line_bytes", "must be a multiple of word_bytes"));
        }
        if self.words_per_line() > 64 {
            return Err(Error::config("geometry.word_bytes", "at most 64 words per line are supported"));
        }
        if self.tag_bits == 0 || self.tag_bits > 48 {
            return Err(Error::config("geometry.tag_bits", "must be within 1..=48"));
        }
        for (shape, name) in [(self.l1, "geometry.l1.ways"), (self.l2, "geometry.l2.ways")] {
            if shape.ways == 0 {
                return Err(Error::config(name, "must be positive"));
            }
        }
        Ok(())
    }

    pub fn words_per_line(&self) -> u32 {
        self.line_bytes / self.word_bytes
    }

    pub fn data_bits(&self) -> u32 {
        self.line_bytes * 8
    }

    pub fn word_bits(&self) -> u32 {
        self.word_bytes * 8
    }

    pub fn shape(&self, level: Level) -> LevelShape {
        match level {
            Level::L1 => self.l1,
            Level::L2 => self.l2,
        }
    }

    pub fn lines(&self, level: Level) -> u64 {
        let s = self.shape(level);
        u64::from(s.sets) * u64::from(s.ways)
    }
}

/// Who owns the data held at a physical address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Ownership {
    UserData,
    NonUserData,
    InvalidSpace,
}

impl Ownership {
    pub const ALL: [Ownership; 3] = [Ownership::UserData, Ownership::NonUserData, Ownership::InvalidSpace];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn short(self) -> &'static str {
        match self {
            Ownership::UserData => "UD",
            Ownership::NonUserData => "NUD",
            Ownership::InvalidSpace => "INV",
        }
    }
}

/// Partition of the physical space into OS/application, user-buffer and
/// unmapped regions, in that order from address zero. Anything at or above
/// `phys_bytes` is unmapped as well.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AddressMap {
    pub phys_bytes: u64,
    pub os_fraction: f64,
    pub user_fraction: f64,
}

impl Default for AddressMap {
    fn default() -> Self {
        AddressMap { phys_bytes: 1 << 30, os_fraction: 0.25, user_fraction: 0.5 }
    }
}

impl AddressMap {
    pub fn validate(&self) -> Result<()> {
        if self.phys_bytes < 1 << 16 {
            return Err(Error::config("address_map.phys_bytes", "must be at least 64 KiB"));
        }
        for (v, name) in [(self.os_fraction, "address_map.os_fraction"), (self.user_fraction, "address_map.user_fraction")] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::config(name, format!("{v} is not within (0, 1)")));
            }
        }
        if self.os_fraction + self.user_fraction > 1.0 {
            return Err(Error::config("address_map.user_fraction", "os_fraction + user_fraction exceeds 1"));
        }
        Ok(())
    }

    fn boundary(&self, frac: f64) -> u64 {
        // 4 KiB aligned so regions never share a line
        ((self.phys_bytes as f64 * frac) as u64) & !0xfff
    }

    pub fn os_range(&self) -> std::ops::Range<u64> {
        0..self.boundary(self.os_fraction)
    }

    pub fn user_range(&self) -> std::ops::Range<u64> {
        self.boundary(self.os_fraction)..self.boundary(self.os_fraction + self.user_fraction)
    }

    pub fn classify(&self, addr: u64) -> Ownership {
        if self.os_range().contains(&addr) {
            Ownership::NonUserData
        } else if self.user_range().contains(&addr) {
            Ownership::UserData
        } else {
            Ownership::InvalidSpace
        }
    }
}

/// Line state. `Exclusive` and `Shared` behave as `Valid` for write-back and
/// propagation; `Invalid` and `Modified` are shared with the MESI alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum LineState {
    #[default]
    Invalid,
    Valid,
    Modified,
    MesiExclusive,
    MesiShared,
}

impl LineState {
    pub fn is_valid(self) -> bool {
        self != LineState::Invalid
    }

    pub fn is_dirty(self) -> bool {
        self == LineState::Modified
    }

    pub fn name(self) -> &'static str {
        match self {
            LineState::Invalid => "invalid",
            LineState::Valid => "valid",
            LineState::Modified => "modified",
            LineState::MesiExclusive => "exclusive",
            LineState::MesiShared => "shared",
        }
    }
}

/// Recorded fault attributes of one field: size `m` and first bit `l`.
/// The presence flag is the `Option` around it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FaultMeta {
    pub m: u32,
    pub l: u32,
}

impl FaultMeta {
    pub fn pattern(&self) -> ErrorPattern {
        ErrorPattern::new(self.m, self.l)
    }
}

impl From<ErrorPattern> for FaultMeta {
    fn from(p: ErrorPattern) -> Self {
        FaultMeta { m: p.m, l: p.l }
    }
}

/// How far a non-user silent corruption has progressed once consumed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Dormant,
    Benign,
    ManifestedLoss,
}

/// Tracking state for a tag-field fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TagFault {
    pub meta: FaultMeta,
    /// Verdict of the tag ECC for this pattern (forced `Sdc` for
    /// control-logic upsets).
    pub verdict: EccVerdict,
    /// Tag value before the flip.
    pub original_tag: u64,
    /// Whether the stored tag was actually altered (silent faults only).
    pub remapped: bool,
    pub site: u8,
    pub dl_booked: bool,
    pub activation: Activation,
}

/// Tracking state for a data-field fault.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DataFault {
    pub meta: FaultMeta,
    /// Words whose share of the pattern has been overwritten or corrected.
    pub cleared_words: u64,
    pub site: u8,
    pub dl_booked: bool,
    pub activation: Activation,
}

impl DataFault {
    pub fn new(meta: FaultMeta, site: u8) -> Self {
        DataFault { meta, cleared_words: 0, site, dl_booked: false, activation: Activation::Dormant }
    }

    /// Remaining flipped bits in `word` after partial masking.
    pub fn flips_in_word(&self, word: u32, word_bits: u32) -> u32 {
        if self.cleared_words & (1u64 << word) != 0 {
            return 0;
        }
        let lo = word * word_bits;
        let hi = lo + word_bits;
        let a = self.meta.l.max(lo);
        let b = (self.meta.l + self.meta.m).min(hi);
        b.saturating_sub(a)
    }

    /// Words that still hold flipped bits, as `(word, flips)`.
    pub fn residual_words(&self, word_bits: u32) -> impl Iterator<Item = (u32, u32)> + '_ {
        let first = self.meta.l / word_bits;
        let last = (self.meta.l + self.meta.m - 1) / word_bits;
        (first..=last)
            .map(move |w| (w, self.flips_in_word(w, word_bits)))
            .filter(|&(_, c)| c > 0)
    }

    pub fn is_cleared(&self, word_bits: u32) -> bool {
        self.residual_words(word_bits).next().is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheLine {
    pub tag: u64,
    pub state: LineState,
    pub ownership: Ownership,
    pub tag_fault: Option<TagFault>,
    pub data_fault: Option<DataFault>,
    /// Words rewritten since a tag remap; bit `i` is word `i`.
    pub overwritten_words: u64,
    pub lru: u64,
}

impl Default for CacheLine {
    fn default() -> Self {
        CacheLine {
            tag: 0,
            state: LineState::Invalid,
            ownership: Ownership::InvalidSpace,
            tag_fault: None,
            data_fault: None,
            overwritten_words: 0,
            lru: 0,
        }
    }
}

impl CacheLine {
    #[inline]
    pub fn has_fault(&self) -> bool {
        self.tag_fault.is_some() || self.data_fault.is_some()
    }

    pub fn overwritten_count(&self) -> u32 {
        self.overwritten_words.count_ones()
    }

    /// Ownership used for lines in the occupancy census.
    pub fn census_owner(&self) -> Ownership {
        if self.state.is_valid() {
            self.ownership
        } else {
            Ownership::InvalidSpace
        }
    }
}

/// One access applied to one cache block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    ReadWord(u32),
    WriteWord(u32),
    UpdateLine,
    EvictInsert,
}

impl AccessKind {
    pub fn name(&self) -> &'static str {
        match self {
            AccessKind::ReadWord(_) => "read",
            AccessKind::WriteWord(_) => "write",
            AccessKind::UpdateLine => "update",
            AccessKind::EvictInsert => "evict",
        }
    }
}

/// What an access did to a block, with enough context to judge faults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawEvent {
    pub kind: AccessKind,
    pub prior_state: LineState,
    pub writeback: bool,
    pub tag_faulted: bool,
    pub data_faulted: bool,
    /// The accessed word overlaps the data fault's remaining bits.
    pub word_overlap: bool,
}

/// Applies the state transition for `kind` to `line`.
///
/// Writes make the line `Modified`; an eviction reports a write-back exactly
/// when the line was `Modified` and leaves the way invalid and fault free.
/// Faults are not judged here, only carried.
pub fn access_line(line: &mut CacheLine, kind: AccessKind, words_per_line: u32, word_bits: u32) -> Result<RawEvent> {
    if let AccessKind::ReadWord(i) | AccessKind::WriteWord(i) = kind {
        if i >= words_per_line {
            return Err(Error::Bounds(format!("word {i} outside a {words_per_line}-word line")));
        }
    }
    let word_overlap = match (kind, &line.data_fault) {
        (AccessKind::ReadWord(i) | AccessKind::WriteWord(i), Some(df)) => df.flips_in_word(i, word_bits) > 0,
        _ => false,
    };
    let ev = RawEvent {
        kind,
        prior_state: line.state,
        writeback: kind == AccessKind::EvictInsert && line.state.is_dirty(),
        tag_faulted: line.tag_fault.is_some(),
        data_faulted: line.data_fault.is_some(),
        word_overlap,
    };
    match kind {
        AccessKind::ReadWord(_) => {}
        AccessKind::WriteWord(i) => {
            line.state = LineState::Modified;
            if let Some(df) = line.data_fault.as_mut() {
                df.cleared_words |= 1 << i;
                if df.is_cleared(word_bits) {
                    line.data_fault = None;
                }
            }
            if matches!(line.tag_fault, Some(tf) if tf.remapped) {
                line.overwritten_words |= 1 << i;
            }
        }
        AccessKind::UpdateLine => {
            line.state = LineState::Modified;
            line.data_fault = None;
            if matches!(line.tag_fault, Some(tf) if tf.remapped) {
                line.tag_fault = None;
            }
            line.overwritten_words = 0;
        }
        AccessKind::EvictInsert => {
            *line = CacheLine { lru: line.lru, ..CacheLine::default() };
        }
    }
    Ok(ev)
}

/// Where an access landed, handed to observers alongside the block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Touch {
    pub level: Level,
    pub set: u32,
    pub way: u32,
    pub kind: AccessKind,
    pub cycle: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Reboot,
}

/// Receives every access that touches a block carrying fault metadata.
pub trait LineObserver {
    /// `false` lets the hierarchy skip fault checks entirely.
    const ACTIVE: bool = true;

    fn on_access(&mut self, touch: Touch, line: &mut CacheLine, geometry: &CacheGeometry) -> Flow;
}

/// Observer for fault-free (golden) simulation.
pub struct NoFaults;

impl LineObserver for NoFaults {
    const ACTIVE: bool = false;

    fn on_access(&mut self, _: Touch, _: &mut CacheLine, _: &CacheGeometry) -> Flow {
        Flow::Continue
    }
}

/// One cache level: `sets x ways` blocks.
#[derive(Debug, Clone)]
pub struct CacheArray {
    level: Level,
    shape: LevelShape,
    offset_bits: u32,
    index_bits: u32,
    tag_mask: u64,
    lines: Vec<CacheLine>,
}

impl CacheArray {
    pub fn new(level: Level, geometry: &CacheGeometry) -> Self {
        let shape = geometry.shape(level);
        CacheArray {
            level,
            shape,
            offset_bits: geometry.line_bytes.trailing_zeros(),
            index_bits: shape.sets.trailing_zeros(),
            tag_mask: (1u64 << geometry.tag_bits) - 1,
            lines: vec![CacheLine::default(); (shape.sets * shape.ways) as usize],
        }
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn shape(&self) -> LevelShape {
        self.shape
    }

    #[inline]
    pub fn set_of(&self, addr: u64) -> u32 {
        ((addr >> self.offset_bits) & u64::from(self.shape.sets - 1)) as u32
    }

    #[inline]
    pub fn tag_of(&self, addr: u64) -> u64 {
        (addr >> (self.offset_bits + self.index_bits)) & self.tag_mask
    }

    /// Base address of the block a `(set, tag)` pair names.
    pub fn addr_of(&self, set: u32, tag: u64) -> u64 {
        (tag << (self.offset_bits + self.index_bits)) | (u64::from(set) << self.offset_bits)
    }

    #[inline]
    fn idx(&self, set: u32, way: u32) -> usize {
        (set * self.shape.ways + way) as usize
    }

    pub fn line(&self, set: u32, way: u32) -> &CacheLine {
        &self.lines[self.idx(set, way)]
    }

    pub fn line_mut(&mut self, set: u32, way: u32) -> &mut CacheLine {
        let i = self.idx(set, way);
        &mut self.lines[i]
    }

    pub fn lines(&self) -> &[CacheLine] {
        &self.lines
    }

    /// Way holding a valid block whose (possibly corrupted) tag matches.
    #[inline]
    pub fn lookup(&self, addr: u64) -> Option<u32> {
        let set = self.set_of(addr);
        let tag = self.tag_of(addr);
        let base = self.idx(set, 0);
        self.lines[base..base + self.shape.ways as usize]
            .iter()
            .position(|l| l.state.is_valid() && l.tag == tag)
            .map(|w| w as u32)
    }

    /// Replacement choice: the first invalid way, else least recently used.
    pub fn victim(&self, set: u32) -> u32 {
        let base = self.idx(set, 0);
        let ways = &self.lines[base..base + self.shape.ways as usize];
        if let Some(w) = ways.iter().position(|l| !l.state.is_valid()) {
            return w as u32;
        }
        ways.iter()
            .enumerate()
            .min_by_key(|(_, l)| l.lru)
            .map(|(w, _)| w as u32)
            .unwrap_or(0)
    }

    /// Inverts bits `l..l+m` of the stored tag and re-resolves ownership at
    /// the new address. Invalid blocks keep `InvalidSpace`.
    pub fn apply_tag_flip(
        &mut self,
        set: u32,
        way: u32,
        pattern: ErrorPattern,
        tag_bits: u32,
        map: &AddressMap,
    ) -> Result<(u64, Ownership)> {
        pattern.check_bounds(tag_bits)?;
        let mask = ((1u64 << pattern.m) - 1) << pattern.l;
        let i = self.idx(set, way);
        let new_tag = (self.lines[i].tag ^ mask) & self.tag_mask;
        let owner = if self.lines[i].state.is_valid() {
            map.classify(self.addr_of(set, new_tag))
        } else {
            Ownership::InvalidSpace
        };
        let line = &mut self.lines[i];
        line.tag = new_tag;
        line.ownership = owner;
        Ok((new_tag, owner))
    }

    /// Line counts per census owner, indexed by [`Ownership::index`].
    pub fn census(&self) -> [u64; 3] {
        let mut out = [0; 3];
        for l in &self.lines {
            out[l.census_owner().index()] += 1;
        }
        out
    }
}

/// Memory operation issued by the access stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MemOp {
    Read,
    Write,
    /// Full-line overwrite (DMA or block copy); no fetch on miss.
    UpdateLine,
}

/// Inclusive L1/L2 hierarchy with an address map.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    geometry: CacheGeometry,
    map: AddressMap,
    l1: CacheArray,
    l2: CacheArray,
    clock: u64,
}

impl Hierarchy {
    pub fn new(geometry: CacheGeometry, map: AddressMap) -> Self {
        Hierarchy {
            l1: CacheArray::new(Level::L1, &geometry),
            l2: CacheArray::new(Level::L2, &geometry),
            geometry,
            map,
            clock: 0,
        }
    }

    pub fn geometry(&self) -> &CacheGeometry {
        &self.geometry
    }

    pub fn address_map(&self) -> &AddressMap {
        &self.map
    }

    pub fn array(&self, level: Level) -> &CacheArray {
        match level {
            Level::L1 => &self.l1,
            Level::L2 => &self.l2,
        }
    }

    pub fn array_mut(&mut self, level: Level) -> &mut CacheArray {
        match level {
            Level::L1 => &mut self.l1,
            Level::L2 => &mut self.l2,
        }
    }

    /// Where `addr` currently hits, if anywhere.
    pub fn lookup(&self, level: Level, addr: u64) -> Option<(u32, u32)> {
        let arr = self.array(level);
        arr.lookup(addr).map(|w| (arr.set_of(addr), w))
    }

    /// Removes every fault record from both levels.
    pub fn clear_faults(&mut self) {
        for arr in [&mut self.l1, &mut self.l2] {
            for l in arr.lines.iter_mut() {
                l.tag_fault = None;
                l.data_fault = None;
                l.overwritten_words = 0;
            }
        }
    }

    #[inline]
    fn word_of(&self, addr: u64) -> u32 {
        ((addr % u64::from(self.geometry.line_bytes)) / u64::from(self.geometry.word_bytes)) as u32
    }

    /// Applies `kind` to one block, consulting the observer first when the
    /// block carries a fault.
    fn touch<O: LineObserver>(&mut self, level: Level, set: u32, way: u32, kind: AccessKind, cycle: u64, obs: &mut O) -> Flow {
        let geometry = self.geometry;
        let clock = self.clock;
        let line = self.array_mut(level).line_mut(set, way);
        if O::ACTIVE && line.has_fault() {
            let t = Touch { level, set, way, kind, cycle };
            if obs.on_access(t, line, &geometry) == Flow::Reboot {
                return Flow::Reboot;
            }
        }
        access_line(line, kind, geometry.words_per_line(), geometry.word_bits())
            .expect("word index derived from the line geometry");
        if kind != AccessKind::EvictInsert {
            line.lru = clock;
        }
        Flow::Continue
    }

    fn install(&mut self, level: Level, set: u32, way: u32, addr: u64, state: LineState) {
        let tag = self.array(level).tag_of(addr);
        let owner = self.map.classify(addr);
        let clock = self.clock;
        let line = self.array_mut(level).line_mut(set, way);
        debug_assert!(!line.has_fault());
        *line = CacheLine { tag, state, ownership: owner, lru: clock, ..CacheLine::default() };
    }

    /// Writes an evicted dirty L1 block back into its L2 copy, if present.
    fn writeback_to_l2<O: LineObserver>(&mut self, addr: u64, cycle: u64, obs: &mut O) -> Flow {
        if let Some(way) = self.l2.lookup(addr) {
            let set = self.l2.set_of(addr);
            return self.touch(Level::L2, set, way, AccessKind::UpdateLine, cycle, obs);
        }
        Flow::Continue
    }

    /// Evicts an L1 block and writes it back to L2 when dirty.
    fn evict_l1<O: LineObserver>(&mut self, set: u32, way: u32, cycle: u64, obs: &mut O) -> Flow {
        let line = *self.l1.line(set, way);
        if !line.state.is_valid() && !line.has_fault() {
            return Flow::Continue;
        }
        let addr = self.l1.addr_of(set, line.tag);
        if self.touch(Level::L1, set, way, AccessKind::EvictInsert, cycle, obs) == Flow::Reboot {
            return Flow::Reboot;
        }
        if line.state.is_dirty() {
            return self.writeback_to_l2(addr, cycle, obs);
        }
        Flow::Continue
    }

    /// Brings `addr` into L2, evicting (and back-invalidating) a victim.
    fn fill_l2<O: LineObserver>(&mut self, addr: u64, cycle: u64, obs: &mut O) -> Flow {
        let set = self.l2.set_of(addr);
        let way = self.l2.victim(set);
        let victim = *self.l2.line(set, way);
        if victim.state.is_valid() {
            let vaddr = self.l2.addr_of(set, victim.tag);
            if let Some(w1) = self.l1.lookup(vaddr) {
                let s1 = self.l1.set_of(vaddr);
                if self.evict_l1(s1, w1, cycle, obs) == Flow::Reboot {
                    return Flow::Reboot;
                }
            }
        }
        let victim = *self.l2.line(set, way);
        if victim.state.is_valid() || victim.has_fault() {
            if self.touch(Level::L2, set, way, AccessKind::EvictInsert, cycle, obs) == Flow::Reboot {
                return Flow::Reboot;
            }
        }
        self.install(Level::L2, set, way, addr, LineState::Valid);
        Flow::Continue
    }

    /// Runs one memory operation through the hierarchy.
    pub fn access<O: LineObserver>(&mut self, addr: u64, op: MemOp, cycle: u64, obs: &mut O) -> Flow {
        self.clock += 1;
        let word = self.word_of(addr);
        let kind = match op {
            MemOp::Read => AccessKind::ReadWord(word),
            MemOp::Write => AccessKind::WriteWord(word),
            MemOp::UpdateLine => AccessKind::UpdateLine,
        };
        let set1 = self.l1.set_of(addr);
        if let Some(way) = self.l1.lookup(addr) {
            return self.touch(Level::L1, set1, way, kind, cycle, obs);
        }

        match self.l2.lookup(addr) {
            Some(way2) => {
                let set2 = self.l2.set_of(addr);
                if op == MemOp::UpdateLine {
                    self.l2.line_mut(set2, way2).lru = self.clock;
                } else if self.touch(Level::L2, set2, way2, AccessKind::ReadWord(word), cycle, obs) == Flow::Reboot {
                    return Flow::Reboot;
                }
            }
            None => {
                if self.fill_l2(addr, cycle, obs) == Flow::Reboot {
                    return Flow::Reboot;
                }
            }
        }

        let way1 = self.l1.victim(set1);
        if self.evict_l1(set1, way1, cycle, obs) == Flow::Reboot {
            return Flow::Reboot;
        }
        self.install(Level::L1, set1, way1, addr, LineState::MesiExclusive);
        match op {
            MemOp::Read => Flow::Continue,
            _ => self.touch(Level::L1, set1, way1, kind, cycle, obs),
        }
    }

    /// Places a block directly, bypassing the fill path. Used to build
    /// directed scenarios.
    pub fn place(&mut self, level: Level, addr: u64, way: u32, state: LineState) -> (u32, u32) {
        let set = self.array(level).set_of(addr);
        self.clock += 1;
        self.install(level, set, way, addr, state);
        (set, way)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hier() -> Hierarchy {
        let g = CacheGeometry { l1: LevelShape { sets: 4, ways: 2 }, l2: LevelShape { sets: 8, ways: 2 }, ..Default::default() };
        Hierarchy::new(g, AddressMap::default())
    }

    fn user_addr(h: &Hierarchy, k: u64) -> u64 {
        h.address_map().user_range().start + k * 64
    }

    #[test]
    fn empty_cache_misses_then_hits() {
        let mut h = hier();
        let a = user_addr(&h, 3);
        assert_eq!(h.lookup(Level::L1, a), None);
        h.access(a, MemOp::Read, 0, &mut NoFaults);
        let (set, way) = h.lookup(Level::L1, a).unwrap();
        assert_eq!(set, h.array(Level::L1).set_of(a));
        assert!(h.lookup(Level::L2, a).is_some());
        assert_eq!(h.array(Level::L1).line(set, way).ownership, Ownership::UserData);
    }

    #[test]
    fn tag_flip_moves_the_hit() {
        let mut h = hier();
        let a = user_addr(&h, 0);
        h.access(a, MemOp::Read, 0, &mut NoFaults);
        let (set, way) = h.lookup(Level::L2, a).unwrap();
        let map = *h.address_map();
        let (new_tag, _) = h
            .array_mut(Level::L2)
            .apply_tag_flip(set, way, ErrorPattern::new(1, 0), 32, &map)
            .unwrap();
        let b = h.array(Level::L2).addr_of(set, new_tag);
        assert_eq!(h.lookup(Level::L2, a), None);
        assert_eq!(h.lookup(Level::L2, b), Some((set, way)));
    }

    #[test]
    fn tag_flip_examples() {
        let g = CacheGeometry::default();
        let map = AddressMap::default();
        let mut arr = CacheArray::new(Level::L2, &g);
        arr.line_mut(0, 0).tag = 1;
        arr.line_mut(0, 0).state = LineState::Valid;
        assert_eq!(arr.apply_tag_flip(0, 0, ErrorPattern::new(1, 0), 32, &map).unwrap().0, 0);
        arr.line_mut(0, 0).tag = 3;
        assert_eq!(arr.apply_tag_flip(0, 0, ErrorPattern::new(2, 0), 32, &map).unwrap().0, 0);
        // a high tag bit sends the block far above physical memory
        let (_, owner) = arr.apply_tag_flip(0, 0, ErrorPattern::new(1, 31), 32, &map).unwrap();
        assert_eq!(owner, Ownership::InvalidSpace);
        assert!(arr.apply_tag_flip(0, 0, ErrorPattern::new(2, 31), 32, &map).is_err());
    }

    #[test]
    fn write_marks_modified_and_evict_reports_writeback() {
        let mut line = CacheLine { state: LineState::Valid, ..Default::default() };
        access_line(&mut line, AccessKind::WriteWord(2), 8, 64).unwrap();
        assert_eq!(line.state, LineState::Modified);
        let ev = access_line(&mut line, AccessKind::EvictInsert, 8, 64).unwrap();
        assert!(ev.writeback);

        let mut clean = CacheLine { state: LineState::Valid, ..Default::default() };
        assert!(!access_line(&mut clean, AccessKind::EvictInsert, 8, 64).unwrap().writeback);
        let mut excl = CacheLine { state: LineState::MesiExclusive, ..Default::default() };
        assert!(!access_line(&mut excl, AccessKind::EvictInsert, 8, 64).unwrap().writeback);
    }

    #[test]
    fn word_index_out_of_range() {
        let mut line = CacheLine { state: LineState::Valid, ..Default::default() };
        assert!(access_line(&mut line, AccessKind::ReadWord(8), 8, 64).is_err());
    }

    #[test]
    fn update_clears_data_fault_and_overwritten_mask() {
        let mut line = CacheLine {
            state: LineState::Valid,
            data_fault: Some(DataFault::new(FaultMeta { m: 2, l: 10 }, 0)),
            overwritten_words: 0b101,
            ..Default::default()
        };
        access_line(&mut line, AccessKind::UpdateLine, 8, 64).unwrap();
        assert!(line.data_fault.is_none());
        assert_eq!(line.overwritten_words, 0);
        assert_eq!(line.state, LineState::Modified);
    }

    #[test]
    fn partial_overwrite_leaves_residual() {
        let mut df = DataFault::new(FaultMeta { m: 3, l: 63 }, 0);
        assert_eq!(df.flips_in_word(0, 64), 1);
        assert_eq!(df.flips_in_word(1, 64), 2);
        df.cleared_words |= 1;
        assert_eq!(df.residual_words(64).collect::<Vec<_>>(), vec![(1, 2)]);
        assert!(!df.is_cleared(64));
    }

    #[test]
    fn writebacks_only_from_modified_lines() {
        let mut h = hier();
        let (written, read, third) = (user_addr(&h, 0), user_addr(&h, 4), user_addr(&h, 12));
        h.access(written, MemOp::Write, 0, &mut NoFaults);
        h.access(read, MemOp::Read, 1, &mut NoFaults);
        let l2_state = |h: &Hierarchy, a| {
            let (set, way) = h.lookup(Level::L2, a).unwrap();
            h.array(Level::L2).line(set, way).state
        };
        assert_eq!(l2_state(&h, written), LineState::Valid);
        // the L1 set holds two ways; a third block evicts the written one
        h.access(third, MemOp::Read, 2, &mut NoFaults);
        assert!(h.lookup(Level::L1, written).is_none());
        assert_eq!(l2_state(&h, written), LineState::Modified);
        h.access(user_addr(&h, 8), MemOp::Read, 3, &mut NoFaults);
        assert!(h.lookup(Level::L1, read).is_none());
        assert_eq!(l2_state(&h, read), LineState::Valid);
    }

    #[test]
    fn inclusive_fills() {
        let mut h = hier();
        for k in 0..200 {
            h.access(user_addr(&h, k * 7 % 61), MemOp::Read, k, &mut NoFaults);
            let l1 = h.array(Level::L1);
            for set in 0..l1.shape().sets {
                for way in 0..l1.shape().ways {
                    let l = l1.line(set, way);
                    if l.state.is_valid() {
                        assert!(h.lookup(Level::L2, l1.addr_of(set, l.tag)).is_some());
                    }
                }
            }
        }
    }

    #[test]
    fn address_map_regions() {
        let m = AddressMap::default();
        assert_eq!(m.classify(0), Ownership::NonUserData);
        assert_eq!(m.classify(m.user_range().start), Ownership::UserData);
        assert_eq!(m.classify(m.user_range().end), Ownership::InvalidSpace);
        assert_eq!(m.classify(1 << 40), Ownership::InvalidSpace);
        assert!(AddressMap { os_fraction: 0.7, user_fraction: 0.5, ..m }.validate().is_err());
    }
}
