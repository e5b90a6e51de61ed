//! Controller-level consequences of a fault, decided access by access.
//!
//! A [`Tracker`] follows the sites of one injected upset through a single
//! faulty run. It is the [`LineObserver`] of the hierarchy, so it sees each
//! access to a faulty block before the state transition and decides what
//! the controller does: correct, refetch, consume silently, propagate data
//! loss, or reboot.

use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cache::{AccessKind, Activation, CacheGeometry, CacheLine, Flow, Level, LineObserver, Ownership, Touch};
use crate::ecc::{self, EccVerdict, ProtectionScheme};
use crate::error::{Error, Result};
use crate::injection::{Field, InjectionRecord};

/// Controller-level verdict of one access to a faulty field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OutcomeClass {
    Dce,
    DueTf,
    DueDf,
    SdcTfUd,
    SdcDfUd,
    SdcTfNud,
    SdcDfNud,
}

impl OutcomeClass {
    pub const ALL: [OutcomeClass; 7] = [
        OutcomeClass::Dce,
        OutcomeClass::DueTf,
        OutcomeClass::DueDf,
        OutcomeClass::SdcTfUd,
        OutcomeClass::SdcDfUd,
        OutcomeClass::SdcTfNud,
        OutcomeClass::SdcDfNud,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            OutcomeClass::Dce => "DCE",
            OutcomeClass::DueTf => "DUE-TF",
            OutcomeClass::DueDf => "DUE-DF",
            OutcomeClass::SdcTfUd => "SDC-TF-UD",
            OutcomeClass::SdcDfUd => "SDC-DF-UD",
            OutcomeClass::SdcTfNud => "SDC-TF-NUD",
            OutcomeClass::SdcDfNud => "SDC-DF-NUD",
        }
    }

    pub fn is_sdc(self) -> bool {
        matches!(
            self,
            OutcomeClass::SdcTfUd | OutcomeClass::SdcDfUd | OutcomeClass::SdcTfNud | OutcomeClass::SdcDfNud
        )
    }

    pub fn is_due(self) -> bool {
        matches!(self, OutcomeClass::DueTf | OutcomeClass::DueDf)
    }

    fn sdc(field: Field, user: bool) -> Self {
        match (field, user) {
            (Field::Tag, true) => OutcomeClass::SdcTfUd,
            (Field::Tag, false) => OutcomeClass::SdcTfNud,
            (Field::Data, true) => OutcomeClass::SdcDfUd,
            (Field::Data, false) => OutcomeClass::SdcDfNud,
        }
    }
}

impl fmt::Display for OutcomeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ways a fault disappears without harm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MaskKind {
    MaskWrite,
    MaskUpdate,
    MaskInsert,
    MaskReboot,
    MaskDetectValid,
    MaskCorrect,
}

impl MaskKind {
    pub const ALL: [MaskKind; 6] = [
        MaskKind::MaskWrite,
        MaskKind::MaskUpdate,
        MaskKind::MaskInsert,
        MaskKind::MaskReboot,
        MaskKind::MaskDetectValid,
        MaskKind::MaskCorrect,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MaskKind::MaskWrite => "Mask_Write",
            MaskKind::MaskUpdate => "Mask_Update",
            MaskKind::MaskInsert => "Mask_Insert",
            MaskKind::MaskReboot => "Mask_Reboot",
            MaskKind::MaskDetectValid => "Mask_Detect_Valid",
            MaskKind::MaskCorrect => "Mask_Correct",
        }
    }
}

/// Data-loss incidences, from initial corruption to propagation below.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DlKind {
    DlLine,
    DlWord,
    DlWordPropagate,
    DlLinePropagateLower,
    DlWordPropagateLower,
}

impl DlKind {
    pub const ALL: [DlKind; 5] = [
        DlKind::DlLine,
        DlKind::DlWord,
        DlKind::DlWordPropagate,
        DlKind::DlLinePropagateLower,
        DlKind::DlWordPropagateLower,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            DlKind::DlLine => "DL_Line",
            DlKind::DlWord => "DL_Word",
            DlKind::DlWordPropagate => "DL_Word_Propagate",
            DlKind::DlLinePropagateLower => "DL_Line_Propagate_Lower",
            DlKind::DlWordPropagateLower => "DL_Word_Propagate_Lower",
        }
    }
}

/// How a silent corruption of OS/application data plays out once used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManifestationParams {
    /// Chance the corruption never shows.
    pub p_not_manifest: f64,
    /// Chance a manifested corruption damages user data instead of
    /// crashing the controller.
    pub p_os_dl: f64,
}

impl Default for ManifestationParams {
    fn default() -> Self {
        ManifestationParams { p_not_manifest: 0.304, p_os_dl: 0.00025 }
    }
}

impl ManifestationParams {
    pub fn validate(&self) -> Result<()> {
        for (v, name) in [(self.p_not_manifest, "manifestation.p_not_manifest"), (self.p_os_dl, "manifestation.p_os_dl")] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(name, format!("{v} is not within [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Bytes lost when a remapped dirty line is written back after
/// `overwritten` of its words were rewritten for the new address.
pub fn dl_magnitude(line_bytes: u32, overwritten: u32, word_bytes: u32) -> Result<u32> {
    line_bytes
        .checked_sub(overwritten * word_bytes)
        .ok_or_else(|| Error::InvalidArgument(format!("{overwritten} words of {word_bytes} B exceed a {line_bytes} B line")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackEvent {
    Outcome(OutcomeClass),
    Mask(MaskKind),
    Dl { kind: DlKind, bytes: u32, source: OutcomeClass },
    /// Silent OS-data corruption that reached user data.
    OsDl { bytes: u32 },
    Reboot(OutcomeClass),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoggedEvent {
    pub cycle: u64,
    pub site: u8,
    pub level: Level,
    pub set: u32,
    pub way: u32,
    pub access: &'static str,
    pub event: TrackEvent,
}

/// Final fate of one fault site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Disposition {
    /// Never reached by any access.
    Untouched,
    /// Touched but still present when the run ended.
    Latent,
    Masked(MaskKind),
    DataLoss,
    Unavailability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RebootInfo {
    pub cycle: u64,
    pub cause: OutcomeClass,
    pub site: u8,
}

/// Everything one faulty run produced.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunOutcome {
    pub outcomes: [u64; 7],
    pub masks: [u64; 6],
    pub dl_counts: [u64; 5],
    pub dl_bytes: [u64; 5],
    /// DL bytes by the outcome class that caused them.
    pub dl_bytes_by_source: [u64; 7],
    pub os_dl_events: u64,
    pub os_dl_bytes: u64,
    /// DL events whose source was a detected error; always zero when the
    /// model is consistent.
    pub dl_from_due: u64,
    pub reboot: Option<RebootInfo>,
    pub dispositions: Vec<Disposition>,
    pub events: Vec<LoggedEvent>,
}

impl RunOutcome {
    pub fn total_dl_bytes(&self) -> u64 {
        self.dl_bytes.iter().sum()
    }

    pub fn dl_events(&self) -> u64 {
        self.dl_counts.iter().sum()
    }

    pub fn has(&self, pred: impl Fn(OutcomeClass) -> bool) -> bool {
        OutcomeClass::ALL.iter().any(|&c| pred(c) && self.outcomes[c.index()] > 0)
    }
}

#[derive(Debug, Clone, Copy)]
struct SiteTrack {
    touched: bool,
    terminal: Option<Disposition>,
}

/// Follows the sites of one injected upset.
#[derive(Debug, Clone)]
pub struct Tracker {
    scheme: ProtectionScheme,
    manifest: ManifestationParams,
    rng: ChaCha8Rng,
    log: bool,
    sites: Vec<SiteTrack>,
    out: RunOutcome,
}

impl Tracker {
    pub fn new(scheme: ProtectionScheme, manifest: ManifestationParams, rng: ChaCha8Rng, log: bool) -> Self {
        Tracker { scheme, manifest, rng, log, sites: Vec::new(), out: RunOutcome::default() }
    }

    /// Registers a freshly injected site and books data loss that is
    /// certain at the moment of the upset: a silent fault on a dirty user
    /// block has already destroyed the only valid copy.
    pub fn on_inject(&mut self, rec: &InjectionRecord, line: &CacheLine, geometry: &CacheGeometry, cycle: u64) -> u8 {
        let id = self.sites.len() as u8;
        self.sites.push(SiteTrack { touched: false, terminal: None });
        if !(line.state.is_dirty() && rec.ownership == Ownership::UserData) {
            return id;
        }
        let touch = Touch { level: rec.level, set: rec.set, way: rec.way, kind: AccessKind::EvictInsert, cycle };
        match rec.field {
            Field::Tag => {
                if rec.verdict == EccVerdict::Sdc {
                    self.outcome(touch, id, OutcomeClass::SdcTfUd);
                    self.book_dl(touch, id, DlKind::DlLine, geometry.line_bytes, OutcomeClass::SdcTfUd);
                }
            }
            Field::Data => {
                if let Some(df) = line.data_fault {
                    let silent = df
                        .residual_words(geometry.word_bits())
                        .filter(|&(_, c)| ecc::classify_flips(self.scheme, c) == EccVerdict::Sdc)
                        .count() as u32;
                    if silent > 0 {
                        self.outcome(touch, id, OutcomeClass::SdcDfUd);
                        self.book_dl(touch, id, DlKind::DlWord, silent * geometry.word_bytes, OutcomeClass::SdcDfUd);
                    }
                }
            }
        }
        id
    }

    /// Closes the run and returns what happened.
    pub fn finish(mut self) -> RunOutcome {
        self.out.dispositions = self
            .sites
            .iter()
            .map(|s| match s.terminal {
                Some(d) => d,
                None if s.touched => Disposition::Latent,
                None => Disposition::Untouched,
            })
            .collect();
        self.out
    }

    pub fn outcome_so_far(&self) -> &RunOutcome {
        &self.out
    }

    /// True once every site has reached a terminal disposition.
    pub fn all_resolved(&self) -> bool {
        self.sites.iter().all(|s| s.terminal.is_some())
    }

    fn emit(&mut self, touch: Touch, site: u8, event: TrackEvent) {
        if self.log {
            self.out.events.push(LoggedEvent {
                cycle: touch.cycle,
                site,
                level: touch.level,
                set: touch.set,
                way: touch.way,
                access: touch.kind.name(),
                event,
            });
        }
    }

    fn outcome(&mut self, touch: Touch, site: u8, class: OutcomeClass) {
        self.out.outcomes[class.index()] += 1;
        self.emit(touch, site, TrackEvent::Outcome(class));
    }

    fn book_dl(&mut self, touch: Touch, site: u8, kind: DlKind, bytes: u32, source: OutcomeClass) {
        self.out.dl_counts[kind.index()] += 1;
        self.out.dl_bytes[kind.index()] += u64::from(bytes);
        self.out.dl_bytes_by_source[source.index()] += u64::from(bytes);
        if !source.is_sdc() {
            self.out.dl_from_due += 1;
        }
        let s = &mut self.sites[site as usize];
        s.terminal.get_or_insert(Disposition::DataLoss);
        self.emit(touch, site, TrackEvent::Dl { kind, bytes, source });
    }

    /// Records a harmless disappearance unless the site already had a
    /// terminal fate.
    fn mask(&mut self, touch: Touch, site: u8, kind: MaskKind) {
        let s = &mut self.sites[site as usize];
        if s.terminal.is_none() {
            s.terminal = Some(Disposition::Masked(kind));
            self.out.masks[kind.index()] += 1;
            self.emit(touch, site, TrackEvent::Mask(kind));
        }
    }

    fn reboot(&mut self, touch: Touch, site: u8, cause: OutcomeClass) -> Flow {
        self.out.reboot = Some(RebootInfo { cycle: touch.cycle, cause, site });
        self.sites[site as usize].terminal.get_or_insert(Disposition::Unavailability);
        self.emit(touch, site, TrackEvent::Reboot(cause));
        for other in 0..self.sites.len() as u8 {
            if other != site {
                self.mask(touch, other, MaskKind::MaskReboot);
            }
        }
        Flow::Reboot
    }

    /// Silent corruption of OS/application data: benign, user-data damage,
    /// or a crash. Decided once per site at first use.
    fn manifest(&mut self, touch: Touch, site: u8, class: OutcomeClass, activation: &mut Activation, word_bytes: u32) -> Flow {
        if *activation != Activation::Dormant {
            return Flow::Continue;
        }
        if self.rng.random::<f64>() < self.manifest.p_not_manifest {
            *activation = Activation::Benign;
            return Flow::Continue;
        }
        if self.rng.random::<f64>() < self.manifest.p_os_dl {
            *activation = Activation::ManifestedLoss;
            self.out.os_dl_events += 1;
            self.out.os_dl_bytes += u64::from(word_bytes);
            self.emit(touch, site, TrackEvent::OsDl { bytes: word_bytes });
            self.book_dl(touch, site, DlKind::DlWord, word_bytes, class);
            return Flow::Continue;
        }
        self.reboot(touch, site, class)
    }

    fn on_tag(&mut self, t: Touch, line: &mut CacheLine, g: &CacheGeometry) -> Flow {
        let Some(mut tf) = line.tag_fault else { return Flow::Continue };
        let site = tf.site;
        self.sites[site as usize].touched = true;
        if t.kind == AccessKind::EvictInsert && !line.state.is_valid() {
            self.mask(t, site, MaskKind::MaskInsert);
            return Flow::Continue;
        }
        match tf.verdict {
            EccVerdict::NoError => return Flow::Continue,
            EccVerdict::Dce => {
                self.outcome(t, site, OutcomeClass::Dce);
                self.mask(t, site, MaskKind::MaskCorrect);
                line.tag_fault = None;
                return Flow::Continue;
            }
            // the block may have been dirty under its true tag
            EccVerdict::Due => {
                self.outcome(t, site, OutcomeClass::DueTf);
                return self.reboot(t, site, OutcomeClass::DueTf);
            }
            EccVerdict::Sdc => {}
        }
        let user = line.ownership == Ownership::UserData;
        let class = OutcomeClass::sdc(Field::Tag, user);
        let flow = match t.kind {
            AccessKind::ReadWord(i) => {
                if line.overwritten_words & (1 << i) != 0 {
                    return Flow::Continue;
                }
                match line.ownership {
                    Ownership::UserData => {
                        self.outcome(t, site, class);
                        self.book_dl(t, site, DlKind::DlWordPropagate, g.word_bytes, class);
                        Flow::Continue
                    }
                    Ownership::NonUserData => {
                        self.outcome(t, site, class);
                        self.manifest(t, site, class, &mut tf.activation, g.word_bytes)
                    }
                    Ownership::InvalidSpace => Flow::Continue,
                }
            }
            AccessKind::WriteWord(i) => {
                let all = if g.words_per_line() == 64 { u64::MAX } else { (1u64 << g.words_per_line()) - 1 };
                if (line.overwritten_words | 1 << i) == all {
                    self.mask(t, site, MaskKind::MaskWrite);
                    line.tag_fault = None;
                    line.overwritten_words = 0;
                    return Flow::Continue;
                }
                Flow::Continue
            }
            AccessKind::UpdateLine => {
                self.mask(t, site, MaskKind::MaskUpdate);
                Flow::Continue
            }
            AccessKind::EvictInsert => {
                if !line.state.is_dirty() {
                    self.mask(t, site, MaskKind::MaskInsert);
                    return Flow::Continue;
                }
                match line.ownership {
                    Ownership::UserData => {
                        let bytes = dl_magnitude(g.line_bytes, line.overwritten_count(), g.word_bytes)
                            .expect("overwritten mask never exceeds the line");
                        self.outcome(t, site, class);
                        self.book_dl(t, site, DlKind::DlLinePropagateLower, bytes, class);
                        Flow::Continue
                    }
                    Ownership::NonUserData => {
                        self.outcome(t, site, class);
                        self.manifest(t, site, class, &mut tf.activation, g.word_bytes)
                    }
                    Ownership::InvalidSpace => {
                        self.mask(t, site, MaskKind::MaskInsert);
                        Flow::Continue
                    }
                }
            }
        };
        if let Some(stored) = line.tag_fault.as_mut() {
            stored.activation = tf.activation;
        }
        flow
    }

    fn on_data(&mut self, t: Touch, line: &mut CacheLine, g: &CacheGeometry) -> Flow {
        let Some(mut df) = line.data_fault else { return Flow::Continue };
        let site = df.site;
        let wb = g.word_bits();
        self.sites[site as usize].touched = true;
        let user = line.ownership == Ownership::UserData;
        let class = OutcomeClass::sdc(Field::Data, user);
        let flow = match t.kind {
            AccessKind::ReadWord(i) => {
                let c = df.flips_in_word(i, wb);
                if c == 0 {
                    return Flow::Continue;
                }
                match ecc::classify_flips(self.scheme, c) {
                    EccVerdict::NoError => Flow::Continue,
                    EccVerdict::Dce => {
                        self.outcome(t, site, OutcomeClass::Dce);
                        df.cleared_words |= 1 << i;
                        if df.is_cleared(wb) {
                            self.mask(t, site, MaskKind::MaskCorrect);
                            line.data_fault = None;
                            return Flow::Continue;
                        }
                        Flow::Continue
                    }
                    EccVerdict::Due => {
                        self.outcome(t, site, OutcomeClass::DueDf);
                        if line.state.is_dirty() {
                            return self.reboot(t, site, OutcomeClass::DueDf);
                        }
                        // clean: invalidate and refetch the whole block
                        self.mask(t, site, MaskKind::MaskDetectValid);
                        line.data_fault = None;
                        return Flow::Continue;
                    }
                    EccVerdict::Sdc => match line.ownership {
                        Ownership::UserData => {
                            self.outcome(t, site, class);
                            self.book_dl(t, site, DlKind::DlWordPropagate, g.word_bytes, class);
                            Flow::Continue
                        }
                        Ownership::NonUserData => {
                            self.outcome(t, site, class);
                            self.manifest(t, site, class, &mut df.activation, g.word_bytes)
                        }
                        Ownership::InvalidSpace => Flow::Continue,
                    },
                }
            }
            AccessKind::WriteWord(i) => {
                if df.flips_in_word(i, wb) > 0 {
                    let mut after = df;
                    after.cleared_words |= 1 << i;
                    if after.is_cleared(wb) {
                        self.mask(t, site, MaskKind::MaskWrite);
                    }
                }
                Flow::Continue
            }
            AccessKind::UpdateLine => {
                self.mask(t, site, MaskKind::MaskUpdate);
                Flow::Continue
            }
            AccessKind::EvictInsert => {
                if !line.state.is_dirty() {
                    self.mask(t, site, MaskKind::MaskInsert);
                    return Flow::Continue;
                }
                // write-back checks every word still carrying flips
                let mut silent = 0u32;
                let mut detected = false;
                let mut corrected = false;
                for (_, c) in df.residual_words(wb) {
                    match ecc::classify_flips(self.scheme, c) {
                        EccVerdict::Due => detected = true,
                        EccVerdict::Sdc => silent += 1,
                        EccVerdict::Dce => corrected = true,
                        EccVerdict::NoError => {}
                    }
                }
                if detected {
                    self.outcome(t, site, OutcomeClass::DueDf);
                    return self.reboot(t, site, OutcomeClass::DueDf);
                }
                if corrected {
                    self.outcome(t, site, OutcomeClass::Dce);
                }
                if silent == 0 {
                    self.mask(t, site, MaskKind::MaskCorrect);
                    return Flow::Continue;
                }
                match line.ownership {
                    Ownership::UserData => {
                        self.outcome(t, site, class);
                        self.book_dl(t, site, DlKind::DlWordPropagateLower, silent * g.word_bytes, class);
                        Flow::Continue
                    }
                    Ownership::NonUserData => {
                        self.outcome(t, site, class);
                        self.manifest(t, site, class, &mut df.activation, g.word_bytes)
                    }
                    Ownership::InvalidSpace => {
                        self.mask(t, site, MaskKind::MaskInsert);
                        Flow::Continue
                    }
                }
            }
        };
        if let Some(stored) = line.data_fault.as_mut() {
            stored.cleared_words = df.cleared_words;
            stored.activation = df.activation;
        }
        flow
    }
}

impl LineObserver for Tracker {
    fn on_access(&mut self, touch: Touch, line: &mut CacheLine, geometry: &CacheGeometry) -> Flow {
        if self.on_tag(touch, line, geometry) == Flow::Reboot {
            return Flow::Reboot;
        }
        self.on_data(touch, line, geometry)
    }
}
