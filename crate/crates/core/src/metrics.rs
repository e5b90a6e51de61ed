//! Campaign counters and the AVF / SSVF families computed from them.
//!
//! Counters are plain sums, so shards merge by addition. Every ratio is
//! `None` when its denominator is zero.

use std::collections::BTreeMap;

use crate::cache::Ownership;
use crate::error::{Error, Result};
use crate::injection::Field;
use crate::tracker::{Disposition, DlKind, MaskKind, OutcomeClass, RunOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Failure {
    Du,
    Dl,
}

/// Per-MBU-size tallies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MbuRow {
    pub injected: u64,
    pub du: u64,
    pub dl: u64,
    pub dl_bytes: u64,
}

/// Fate of individual fault sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SiteFates {
    pub untouched: u64,
    pub latent: u64,
    pub masked: u64,
    pub data_loss: u64,
    pub unavailability: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CampaignCounters {
    pub injections: u64,
    /// Indexed `[field][ownership]`, ownership taken when the upset struck.
    pub injected: [[u64; 3]; 2],
    /// Injections that produced at least one silent corruption.
    pub sdc: [[u64; 3]; 2],
    pub due: [u64; 2],
    pub dce: [u64; 2],
    /// Injections that rebooted the controller.
    pub du: [u64; 2],
    /// Injections that lost user data.
    pub dl: [u64; 2],
    pub outcomes: [u64; 7],
    pub masks: [u64; 6],
    pub dl_counts: [u64; 5],
    pub dl_bytes: [u64; 5],
    /// Reboots by the outcome class that caused them.
    pub du_source: [u64; 7],
    /// Lost bytes by the outcome class that caused them.
    pub dl_source_bytes: [u64; 7],
    pub mbu: BTreeMap<u32, MbuRow>,
    pub sites: SiteFates,
    pub os_dl_events: u64,
    pub os_dl_bytes: u64,
    pub dl_from_due: u64,
}

impl CampaignCounters {
    /// Adds one injection's run.
    pub fn record(&mut self, field: Field, ownership: Ownership, mbu_size: u32, run: &RunOutcome) {
        let f = field.index();
        self.injections += 1;
        self.injected[f][ownership.index()] += 1;
        if run.has(OutcomeClass::is_sdc) {
            self.sdc[f][ownership.index()] += 1;
        }
        if run.has(OutcomeClass::is_due) {
            self.due[f] += 1;
        }
        if run.outcomes[OutcomeClass::Dce.index()] > 0 {
            self.dce[f] += 1;
        }
        let lost = run.total_dl_bytes();
        let row = self.mbu.entry(mbu_size).or_default();
        row.injected += 1;
        if let Some(r) = run.reboot {
            self.du[f] += 1;
            self.du_source[r.cause.index()] += 1;
            row.du += 1;
        }
        if run.dl_events() > 0 {
            self.dl[f] += 1;
            row.dl += 1;
            row.dl_bytes += lost;
        }
        for i in 0..7 {
            self.outcomes[i] += run.outcomes[i];
            self.dl_source_bytes[i] += run.dl_bytes_by_source[i];
        }
        for i in 0..6 {
            self.masks[i] += run.masks[i];
        }
        for i in 0..5 {
            self.dl_counts[i] += run.dl_counts[i];
            self.dl_bytes[i] += run.dl_bytes[i];
        }
        for d in &run.dispositions {
            match d {
                Disposition::Untouched => self.sites.untouched += 1,
                Disposition::Latent => self.sites.latent += 1,
                Disposition::Masked(_) => self.sites.masked += 1,
                Disposition::DataLoss => self.sites.data_loss += 1,
                Disposition::Unavailability => self.sites.unavailability += 1,
            }
        }
        self.os_dl_events += run.os_dl_events;
        self.os_dl_bytes += run.os_dl_bytes;
        self.dl_from_due += run.dl_from_due;
    }

    pub fn merge(&mut self, other: &CampaignCounters) {
        self.injections += other.injections;
        for f in 0..2 {
            for o in 0..3 {
                self.injected[f][o] += other.injected[f][o];
                self.sdc[f][o] += other.sdc[f][o];
            }
            self.due[f] += other.due[f];
            self.dce[f] += other.dce[f];
            self.du[f] += other.du[f];
            self.dl[f] += other.dl[f];
        }
        for i in 0..7 {
            self.outcomes[i] += other.outcomes[i];
            self.du_source[i] += other.du_source[i];
            self.dl_source_bytes[i] += other.dl_source_bytes[i];
        }
        for i in 0..6 {
            self.masks[i] += other.masks[i];
        }
        for i in 0..5 {
            self.dl_counts[i] += other.dl_counts[i];
            self.dl_bytes[i] += other.dl_bytes[i];
        }
        for (m, r) in &other.mbu {
            let row = self.mbu.entry(*m).or_default();
            row.injected += r.injected;
            row.du += r.du;
            row.dl += r.dl;
            row.dl_bytes += r.dl_bytes;
        }
        let (a, b) = (&mut self.sites, &other.sites);
        a.untouched += b.untouched;
        a.latent += b.latent;
        a.masked += b.masked;
        a.data_loss += b.data_loss;
        a.unavailability += b.unavailability;
        self.os_dl_events += other.os_dl_events;
        self.os_dl_bytes += other.os_dl_bytes;
        self.dl_from_due += other.dl_from_due;
    }

    pub fn injected_on(&self, field: Field) -> u64 {
        self.injected[field.index()].iter().sum()
    }

    pub fn total_dl_bytes(&self) -> u64 {
        self.dl_bytes.iter().sum()
    }

    pub fn total_dl_events(&self) -> u64 {
        self.dl_counts.iter().sum()
    }

    pub fn reboots(&self) -> u64 {
        self.du.iter().sum()
    }

    /// Flat `name,value` rows; [`CampaignCounters::from_rows`] reverses it.
    pub fn to_rows(&self) -> Vec<(String, u64)> {
        let mut rows = vec![("injections".to_string(), self.injections)];
        for field in Field::ALL {
            let f = field.index();
            for own in Ownership::ALL {
                rows.push((format!("injected.{}.{}", field.short(), own.short()), self.injected[f][own.index()]));
            }
            for own in Ownership::ALL {
                rows.push((format!("sdc.{}.{}", field.short(), own.short()), self.sdc[f][own.index()]));
            }
            rows.push((format!("due.{}", field.short()), self.due[f]));
            rows.push((format!("dce.{}", field.short()), self.dce[f]));
            rows.push((format!("du.{}", field.short()), self.du[f]));
            rows.push((format!("dl.{}", field.short()), self.dl[f]));
        }
        for c in OutcomeClass::ALL {
            rows.push((format!("outcome.{}", c.name()), self.outcomes[c.index()]));
        }
        for c in OutcomeClass::ALL {
            rows.push((format!("du_source.{}", c.name()), self.du_source[c.index()]));
        }
        for c in OutcomeClass::ALL {
            rows.push((format!("dl_source_bytes.{}", c.name()), self.dl_source_bytes[c.index()]));
        }
        for k in MaskKind::ALL {
            rows.push((format!("mask.{}", k.name()), self.masks[k.index()]));
        }
        for k in DlKind::ALL {
            rows.push((format!("dl_count.{}", k.name()), self.dl_counts[k.index()]));
            rows.push((format!("dl_bytes.{}", k.name()), self.dl_bytes[k.index()]));
        }
        for (m, r) in &self.mbu {
            rows.push((format!("mbu.{m}.injected"), r.injected));
            rows.push((format!("mbu.{m}.du"), r.du));
            rows.push((format!("mbu.{m}.dl"), r.dl));
            rows.push((format!("mbu.{m}.dl_bytes"), r.dl_bytes));
        }
        let s = &self.sites;
        rows.push(("sites.untouched".into(), s.untouched));
        rows.push(("sites.latent".into(), s.latent));
        rows.push(("sites.masked".into(), s.masked));
        rows.push(("sites.data_loss".into(), s.data_loss));
        rows.push(("sites.unavailability".into(), s.unavailability));
        rows.push(("os_dl.events".into(), self.os_dl_events));
        rows.push(("os_dl.bytes".into(), self.os_dl_bytes));
        rows.push(("dl_from_due".into(), self.dl_from_due));
        rows
    }

    pub fn from_rows<'a, I: IntoIterator<Item = (&'a str, u64)>>(rows: I) -> Result<Self> {
        let mut c = CampaignCounters::default();
        let names: BTreeMap<String, (usize, usize)> = Field::ALL
            .iter()
            .flat_map(|f| Ownership::ALL.iter().map(move |o| (format!("{}.{}", f.short(), o.short()), (f.index(), o.index()))))
            .collect();
        let field_of = |s: &str| Field::ALL.iter().find(|f| f.short() == s).map(|f| f.index());
        let class_of = |s: &str| OutcomeClass::ALL.iter().find(|c| c.name() == s).map(|c| c.index());
        for (name, v) in rows {
            let unknown = || Error::Mismatch(format!("unknown counter `{name}`"));
            let (head, rest) = name.split_once('.').unwrap_or((name, ""));
            match head {
                "injections" => c.injections = v,
                "injected" => {
                    let (f, o) = names.get(rest).ok_or_else(unknown)?;
                    c.injected[*f][*o] = v;
                }
                "sdc" => {
                    let (f, o) = names.get(rest).ok_or_else(unknown)?;
                    c.sdc[*f][*o] = v;
                }
                "due" => c.due[field_of(rest).ok_or_else(unknown)?] = v,
                "dce" => c.dce[field_of(rest).ok_or_else(unknown)?] = v,
                "du" => c.du[field_of(rest).ok_or_else(unknown)?] = v,
                "dl" => c.dl[field_of(rest).ok_or_else(unknown)?] = v,
                "outcome" => c.outcomes[class_of(rest).ok_or_else(unknown)?] = v,
                "du_source" => c.du_source[class_of(rest).ok_or_else(unknown)?] = v,
                "dl_source_bytes" => c.dl_source_bytes[class_of(rest).ok_or_else(unknown)?] = v,
                "mask" => {
                    let k = MaskKind::ALL.iter().find(|k| k.name() == rest).ok_or_else(unknown)?;
                    c.masks[k.index()] = v;
                }
                "dl_count" | "dl_bytes" => {
                    let k = DlKind::ALL.iter().find(|k| k.name() == rest).ok_or_else(unknown)?;
                    if head == "dl_count" {
                        c.dl_counts[k.index()] = v;
                    } else {
                        c.dl_bytes[k.index()] = v;
                    }
                }
                "mbu" => {
                    let (m, what) = rest.split_once('.').ok_or_else(unknown)?;
                    let m: u32 = m.parse().map_err(|_| unknown())?;
                    let row = c.mbu.entry(m).or_default();
                    match what {
                        "injected" => row.injected = v,
                        "du" => row.du = v,
                        "dl" => row.dl = v,
                        "dl_bytes" => row.dl_bytes = v,
                        _ => return Err(unknown()),
                    }
                }
                "sites" => match rest {
                    "untouched" => c.sites.untouched = v,
                    "latent" => c.sites.latent = v,
                    "masked" => c.sites.masked = v,
                    "data_loss" => c.sites.data_loss = v,
                    "unavailability" => c.sites.unavailability = v,
                    _ => return Err(unknown()),
                },
                "os_dl" => match rest {
                    "events" => c.os_dl_events = v,
                    "bytes" => c.os_dl_bytes = v,
                    _ => return Err(unknown()),
                },
                "dl_from_due" => c.dl_from_due = v,
                _ => return Err(unknown()),
            }
        }
        Ok(c)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Share of (field, ownership) injections that ended in silent corruption.
pub fn avf_sdc(c: &CampaignCounters, field: Field, ownership: Ownership) -> Option<f64> {
    let (f, o) = (field.index(), ownership.index());
    ratio(c.sdc[f][o], c.injected[f][o])
}

/// Share of field injections that raised a detected-uncorrectable error,
/// pooled over ownership.
pub fn avf_due(c: &CampaignCounters, field: Field) -> Option<f64> {
    ratio(c.due[field.index()], c.injected_on(field))
}

/// Share of field injections that caused unavailability or loss.
pub fn ssvf(c: &CampaignCounters, failure: Failure, field: Field) -> Option<f64> {
    let num = match failure {
        Failure::Du => c.du[field.index()],
        Failure::Dl => c.dl[field.index()],
    };
    ratio(num, c.injected_on(field))
}

/// SSVF pooled over both fields.
pub fn ssvf_overall(c: &CampaignCounters, failure: Failure) -> Option<f64> {
    let num = match failure {
        Failure::Du => c.du.iter().sum(),
        Failure::Dl => c.dl.iter().sum(),
    };
    ratio(num, c.injections)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MbuBreakdown {
    pub size: u32,
    pub injected: u64,
    pub du_share: Option<f64>,
    pub dl_share: Option<f64>,
    /// DU incidences per injection of this size.
    pub du_rate: Option<f64>,
    pub dl_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Breakdowns {
    pub mbu: Vec<MbuBreakdown>,
    /// `(class, reboots, share)`.
    pub du_sources: Vec<(OutcomeClass, u64, Option<f64>)>,
    /// `(class, bytes, share)`.
    pub dl_sources: Vec<(OutcomeClass, u64, Option<f64>)>,
    pub masking: Vec<(MaskKind, u64)>,
    /// `(kind, incidences, bytes)`.
    pub dl_kinds: Vec<(DlKind, u64, u64)>,
}

pub fn breakdowns(c: &CampaignCounters) -> Breakdowns {
    let du_total: u64 = c.mbu.values().map(|r| r.du).sum();
    let dl_total: u64 = c.mbu.values().map(|r| r.dl).sum();
    let mbu = c
        .mbu
        .iter()
        .map(|(&size, r)| MbuBreakdown {
            size,
            injected: r.injected,
            du_share: ratio(r.du, du_total),
            dl_share: ratio(r.dl, dl_total),
            du_rate: ratio(r.du, r.injected),
            dl_rate: ratio(r.dl, r.injected),
        })
        .collect();
    let reboots: u64 = c.du_source.iter().sum();
    let lost: u64 = c.dl_source_bytes.iter().sum();
    let sources = |v: &[u64; 7], total: u64| {
        OutcomeClass::ALL
            .iter()
            .filter(|c| **c != OutcomeClass::Dce)
            .map(|&k| (k, v[k.index()], ratio(v[k.index()], total)))
            .collect()
    };
    Breakdowns {
        mbu,
        du_sources: sources(&c.du_source, reboots),
        dl_sources: sources(&c.dl_source_bytes, lost),
        masking: MaskKind::ALL.iter().map(|&k| (k, c.masks[k.index()])).collect(),
        dl_kinds: DlKind::ALL.iter().map(|&k| (k, c.dl_counts[k.index()], c.dl_bytes[k.index()])).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::RebootInfo;

    fn run_with(class: OutcomeClass, reboot: bool, dl: u64) -> RunOutcome {
        let mut r = RunOutcome::default();
        r.outcomes[class.index()] = 1;
        if reboot {
            r.reboot = Some(RebootInfo { cycle: 0, cause: class, site: 0 });
        }
        if dl > 0 {
            r.dl_counts[DlKind::DlWord.index()] = 1;
            r.dl_bytes[DlKind::DlWord.index()] = dl;
            r.dl_bytes_by_source[class.index()] = dl;
        }
        r.dispositions = vec![Disposition::Latent];
        r
    }

    #[test]
    fn ratios() {
        let mut c = CampaignCounters::default();
        for i in 0..100 {
            let class = if i < 22 { OutcomeClass::SdcTfUd } else { OutcomeClass::Dce };
            c.record(Field::Tag, Ownership::UserData, 1, &run_with(class, false, 0));
        }
        assert_eq!(avf_sdc(&c, Field::Tag, Ownership::UserData), Some(0.22));
        assert_eq!(avf_sdc(&c, Field::Data, Ownership::UserData), None);
        assert_eq!(avf_due(&c, Field::Tag), Some(0.0));
        assert_eq!(ssvf(&c, Failure::Dl, Field::Tag), Some(0.0));
    }

    #[test]
    fn rows_round_trip_and_merge() {
        let mut a = CampaignCounters::default();
        a.record(Field::Data, Ownership::UserData, 3, &run_with(OutcomeClass::SdcDfUd, false, 16));
        a.record(Field::Tag, Ownership::NonUserData, 1, &run_with(OutcomeClass::DueTf, true, 0));
        let rows = a.to_rows();
        let back = CampaignCounters::from_rows(rows.iter().map(|(k, v)| (k.as_str(), *v))).unwrap();
        assert_eq!(back, a);

        let mut b = CampaignCounters::default();
        b.record(Field::Data, Ownership::NonUserData, 2, &run_with(OutcomeClass::SdcDfNud, true, 0));
        let mut ab = a.clone();
        ab.merge(&b);
        let mut ba = b.clone();
        ba.merge(&a);
        assert_eq!(ab, ba);
        assert_eq!(ab.injections, 3);
        assert!(CampaignCounters::from_rows([("bogus", 1)]).is_err());
    }

    #[test]
    fn masking_histogram_has_six_keys() {
        let b = breakdowns(&CampaignCounters::default());
        assert_eq!(b.masking.len(), 6);
        assert_eq!(b.dl_kinds.len(), 5);
        assert_eq!(b.du_sources.len(), 6);
    }

    #[test]
    fn mbu_shares_sum_to_one() {
        let mut c = CampaignCounters::default();
        c.record(Field::Data, Ownership::UserData, 1, &run_with(OutcomeClass::DueDf, true, 0));
        c.record(Field::Data, Ownership::UserData, 2, &run_with(OutcomeClass::DueDf, true, 0));
        c.record(Field::Data, Ownership::UserData, 2, &run_with(OutcomeClass::DueDf, true, 0));
        let b = breakdowns(&c);
        let sum: f64 = b.mbu.iter().filter_map(|r| r.du_share).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert_eq!(b.mbu[1].du_rate, Some(1.0));
    }
}
