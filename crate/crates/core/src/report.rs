//! Report files and scheme comparison.
//!
//! `counters.csv` holds every raw tally plus the few floating inputs
//! (system downtime, upset rate, occupancy); `summary.txt` is derived from
//! it alone by [`derive_summary`]. All files are written to a temporary
//! file in the target directory and renamed into place.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use crate::cache::{Level, Ownership};
use crate::campaign::CampaignReport;
use crate::error::{Error, Result};
use crate::injection::Field;
use crate::metrics::{self, CampaignCounters, Failure};
use crate::tracker::{Disposition, TrackEvent};

pub const SUMMARY_FILE: &str = "summary.txt";
pub const COUNTERS_FILE: &str = "counters.csv";
pub const INJECTIONS_FILE: &str = "injections.csv";
pub const EVENTS_FILE: &str = "events.csv";

/// Ordered `key=value` pairs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
}

impl Summary {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Numeric value of `key`; `None` when absent or `na`.
    pub fn number(&self, key: &str) -> Option<f64> {
        self.get(key).and_then(|v| v.parse().ok())
    }

    fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    fn push_ratio(&mut self, key: impl Into<String>, value: Option<f64>) {
        self.push(key, value.map_or_else(|| "na".to_string(), |v| v.to_string()));
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Summary> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Mismatch(format!("summary line {} is not key=value: `{line}`", i + 1)))?;
            entries.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(Summary { entries })
    }

    pub fn load(path: &Path) -> Result<Summary> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Summary::parse(&text).map_err(|e| Error::Report { path: path.to_path_buf(), reason: e.to_string() })
    }
}

/// Run identity: what was simulated, not what came out.
pub fn identity(report: &CampaignReport) -> Vec<(String, String)> {
    let c = &report.config;
    let targets: Vec<String> = c.targets.iter().map(|t| t.to_string()).collect();
    vec![
        ("scheme".into(), c.scheme.to_string()),
        ("mbu".into(), c.mbu.0.name().to_string()),
        ("targets".into(), targets.join("+")),
        ("redundancy".into(), c.redundancy.mode.to_string()),
        ("seed".into(), c.seed.to_string()),
        ("geometry_id".into(), c.geometry_id()),
        ("workload_id".into(), c.workload_id()),
    ]
}

/// All `counters.csv` rows, integer tallies first.
pub fn counter_rows(report: &CampaignReport) -> Vec<(String, String)> {
    let mut rows: Vec<(String, String)> =
        report.counters.to_rows().into_iter().map(|(k, v)| (k, v.to_string())).collect();
    let s = &report.system;
    let mut push = |k: &str, v: String| rows.push((k.to_string(), v));
    push("run.n", report.n.to_string());
    push("run.accesses", report.accesses.to_string());
    push("run.window_start", report.window.start.to_string());
    push("run.window_end", report.window.end.to_string());
    push("run.events_per_year", report.events_per_year.to_string());
    push("system.runs", s.runs.to_string());
    push("system.du_seconds", s.du_seconds.to_string());
    push("system.du_incidences", s.du_incidences.to_string());
    push("system.dl_bytes", s.dl_bytes.to_string());
    push("system.dl_incidences", s.dl_incidences.to_string());
    for (li, level) in Level::ALL.iter().enumerate() {
        for o in Ownership::ALL {
            push(&format!("occupancy.{level:?}.{}", o.short()), report.occupancy[li][o.index()].to_string());
        }
    }
    rows
}

fn lookup<'a>(rows: &'a [(String, String)], key: &str) -> Result<&'a str> {
    rows.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Mismatch(format!("counters lack `{key}`")))
}

fn num<T: std::str::FromStr>(rows: &[(String, String)], key: &str) -> Result<T> {
    lookup(rows, key)?.parse().map_err(|_| Error::Mismatch(format!("counter `{key}` is not a number")))
}

/// Builds the summary from run identity and counter rows alone.
pub fn derive_summary(identity: &[(String, String)], rows: &[(String, String)]) -> Result<Summary> {
    let tallies = rows.iter().filter(|(k, _)| !k.starts_with("run.") && !k.starts_with("system.") && !k.starts_with("occupancy."));
    let mut parsed = Vec::new();
    for (k, v) in tallies {
        let v: u64 = v.parse().map_err(|_| Error::Mismatch(format!("counter `{k}` is not an integer")))?;
        parsed.push((k.as_str(), v));
    }
    let c = CampaignCounters::from_rows(parsed)?;
    let n: u64 = num(rows, "run.n")?;
    let events_per_year: f64 = num(rows, "run.events_per_year")?;
    let du_seconds: f64 = num(rows, "system.du_seconds")?;
    let dl_bytes: u64 = num(rows, "system.dl_bytes")?;

    let mut s = Summary::default();
    s.push("n", n);
    for (k, v) in identity {
        s.push(k.clone(), v);
    }
    s.push("accesses", lookup(rows, "run.accesses")?);
    s.push("injections", c.injections);
    for field in Field::ALL {
        for o in Ownership::ALL {
            s.push_ratio(format!("avf_sdc.{}.{}", field.short(), o.short()), metrics::avf_sdc(&c, field, o));
        }
        s.push_ratio(format!("avf_due.{}", field.short()), metrics::avf_due(&c, field));
    }
    for (failure, name) in [(Failure::Du, "du"), (Failure::Dl, "dl")] {
        for field in Field::ALL {
            s.push_ratio(format!("ssvf_{name}.{}", field.short()), metrics::ssvf(&c, failure, field));
        }
        s.push_ratio(format!("ssvf_{name}"), metrics::ssvf_overall(&c, failure));
    }
    s.push("reboots", c.reboots());
    s.push("dl_events", c.total_dl_events());
    s.push("dl_bytes", c.total_dl_bytes());
    s.push("dl_from_due", c.dl_from_due);
    for level in Level::ALL {
        for o in Ownership::ALL {
            let key = format!("occupancy.{level:?}.{}", o.short());
            s.push(key.clone(), lookup(rows, &key)?);
        }
    }
    s.push("system.du_seconds", du_seconds);
    s.push("system.du_incidences", lookup(rows, "system.du_incidences")?);
    s.push("system.dl_bytes", dl_bytes);
    s.push("system.dl_incidences", lookup(rows, "system.dl_incidences")?);
    s.push("events_per_year", events_per_year);
    let annual = crate::system::annualize(
        &crate::system::SystemStats { du_seconds, dl_bytes, ..Default::default() },
        n,
        events_per_year,
    )?;
    s.push("du_minutes_per_year", annual.du_minutes_per_year);
    s.push("dl_bytes_per_year", annual.dl_bytes_per_year);
    Ok(s)
}

pub fn summary(report: &CampaignReport) -> Result<Summary> {
    derive_summary(&identity(report), &counter_rows(report))
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn csv_bytes<R, I>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
    I: IntoIterator<Item = R>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| Error::InvalidArgument(format!("csv encoding: {e}"));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv encoding: {e}")))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "na".into(), |v| v.to_string())
}

fn event_detail(e: &TrackEvent) -> (String, String, u64) {
    match *e {
        TrackEvent::Outcome(c) => ("outcome".into(), c.name().into(), 0),
        TrackEvent::Mask(k) => ("mask".into(), k.name().into(), 0),
        TrackEvent::Dl { kind, bytes, source } => (kind.name().into(), source.name().into(), u64::from(bytes)),
        TrackEvent::OsDl { bytes } => ("os_dl".into(), String::new(), u64::from(bytes)),
        TrackEvent::Reboot(c) => ("reboot".into(), c.name().into(), 0),
    }
}

fn disposition_name(d: &Disposition) -> String {
    match d {
        Disposition::Masked(k) => k.name().to_string(),
        other => format!("{other:?}"),
    }
}

/// Writes every report file into `dir` and returns their paths.
pub fn write_report(report: &CampaignReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        write_atomic(&path, &bytes)?;
        written.push(path);
        Ok(())
    };

    let rows = counter_rows(report);
    let summary = derive_summary(&identity(report), &rows)?;
    put(SUMMARY_FILE, summary.render().into_bytes())?;
    put(COUNTERS_FILE, csv_bytes(&["name", "value"], rows.iter().map(|(k, v)| [k.as_str(), v.as_str()]))?)?;

    let b = metrics::breakdowns(&report.counters);
    put(
        "breakdown_mbu.csv",
        csv_bytes(
            &["size", "injected", "du_share", "dl_share", "du_rate", "dl_rate"],
            b.mbu.iter().map(|r| {
                [r.size.to_string(), r.injected.to_string(), opt(r.du_share), opt(r.dl_share), opt(r.du_rate), opt(r.dl_rate)]
            }),
        )?,
    )?;
    put(
        "breakdown_du_sources.csv",
        csv_bytes(&["source", "reboots", "share"], b.du_sources.iter().map(|(c, v, s)| [c.name().to_string(), v.to_string(), opt(*s)]))?,
    )?;
    put(
        "breakdown_dl_sources.csv",
        csv_bytes(&["source", "bytes", "share"], b.dl_sources.iter().map(|(c, v, s)| [c.name().to_string(), v.to_string(), opt(*s)]))?,
    )?;
    put(
        "breakdown_masking.csv",
        csv_bytes(&["kind", "count"], b.masking.iter().map(|(k, v)| [k.name().to_string(), v.to_string()]))?,
    )?;
    put(
        "breakdown_dl_kinds.csv",
        csv_bytes(&["kind", "incidences", "bytes"], b.dl_kinds.iter().map(|(k, n, v)| [k.name().to_string(), n.to_string(), v.to_string()]))?,
    )?;

    let injections = report.results.iter().map(|r| {
        let first = r.records.first();
        let dispositions: Vec<String> = r.outcome.dispositions.iter().map(disposition_name).collect();
        [
            r.index.to_string(),
            r.controller.to_string(),
            r.fault.cycle.to_string(),
            r.fault.mbu_size.to_string(),
            r.records.len().to_string(),
            r.field().short().to_string(),
            first.map_or(String::new(), |x| format!("{:?}", x.level)),
            first.map_or(String::new(), |x| x.set.to_string()),
            first.map_or(String::new(), |x| x.way.to_string()),
            r.ownership().short().to_string(),
            first.map_or(String::new(), |x| format!("{:?}", x.verdict)),
            dispositions.join(";"),
            r.reboot_at.map_or(String::new(), |t| t.to_string()),
            r.outcome.total_dl_bytes().to_string(),
        ]
    });
    put(
        INJECTIONS_FILE,
        csv_bytes(
            &["index", "controller", "cycle", "mbu", "sites", "field", "level", "set", "way", "ownership", "verdict", "fate", "reboot_at_s", "dl_bytes"],
            injections,
        )?,
    )?;

    if report.config.output.event_log {
        let events = report.events().map(|(r, e)| {
            let (kind, detail, bytes) = event_detail(&e.event);
            [
                r.index.to_string(),
                r.controller.to_string(),
                e.cycle.to_string(),
                e.site.to_string(),
                format!("{:?}", e.level),
                e.set.to_string(),
                e.way.to_string(),
                e.access.to_string(),
                kind,
                detail,
                bytes.to_string(),
            ]
        });
        put(
            EVENTS_FILE,
            csv_bytes(&["index", "controller", "cycle", "site", "level", "set", "way", "access", "event", "detail", "bytes"], events)?,
        )?;
    }
    Ok(written)
}

/// Rows shown by [`compare`], in order.
pub const COMPARE_KEYS: &[&str] = &[
    "n",
    "avf_sdc.TF.UD",
    "avf_sdc.TF.NUD",
    "avf_sdc.DF.UD",
    "avf_sdc.DF.NUD",
    "avf_due.TF",
    "avf_due.DF",
    "ssvf_du",
    "ssvf_dl",
    "reboots",
    "dl_bytes",
    "system.du_seconds",
    "system.dl_bytes",
    "du_minutes_per_year",
    "dl_bytes_per_year",
];

/// Side-by-side table of several runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<String>)>,
}

impl Comparison {
    pub fn to_csv(&self) -> Result<String> {
        let mut header = vec!["metric"];
        header.extend(self.columns.iter().map(String::as_str));
        let bytes = csv_bytes(
            &header,
            self.rows.iter().map(|(k, vs)| std::iter::once(k.clone()).chain(vs.iter().cloned()).collect::<Vec<_>>()),
        )?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Accepts a report directory or a summary file.
pub fn summary_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(SUMMARY_FILE)
    } else {
        p.to_path_buf()
    }
}

/// Compares runs of one machine and workload. Columns are labelled by
/// scheme, with the redundancy mode appended when the runs differ in it.
pub fn compare(paths: &[PathBuf]) -> Result<Comparison> {
    if paths.is_empty() {
        return Err(Error::InvalidArgument("nothing to compare".into()));
    }
    let mut summaries = Vec::new();
    for p in paths {
        let path = summary_path(p);
        summaries.push((path.clone(), Summary::load(&path)?));
    }
    let (first_path, first) = &summaries[0];
    for key in ["geometry_id", "workload_id"] {
        let want = first.get(key).ok_or_else(|| Error::Report { path: first_path.clone(), reason: format!("missing `{key}`") })?;
        for (path, s) in &summaries[1..] {
            let got = s.get(key).unwrap_or("");
            if got != want {
                return Err(Error::Mismatch(format!(
                    "{} has {key} `{got}` but {} has `{want}`; only runs of the same {} can be compared",
                    path.display(),
                    first_path.display(),
                    if key == "geometry_id" { "cache geometry" } else { "workload" }
                )));
            }
        }
    }
    let label = |s: &Summary, key: &str| s.get(key).unwrap_or("?").to_string();
    let modes_differ = summaries.iter().any(|(_, s)| s.get("redundancy") != first.get("redundancy"));
    let columns = summaries
        .iter()
        .map(|(_, s)| {
            let mut l = label(s, "scheme");
            if modes_differ {
                l = format!("{l}/{}", label(s, "redundancy"));
            }
            l
        })
        .collect();
    let rows = COMPARE_KEYS
        .iter()
        .map(|k| (k.to_string(), summaries.iter().map(|(_, s)| s.get(k).unwrap_or("na").to_string()).collect()))
        .collect();
    Ok(Comparison { columns, rows })
}
