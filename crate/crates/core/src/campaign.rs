//! Statistical fault-injection campaigns.
//!
//! A campaign expands the workload once, warms a fault-free hierarchy, and
//! then runs one faulty simulation per upset. Upsets are sorted by time and
//! handed out in contiguous batches; each batch walks its own fault-free
//! copy forward and clones it at every injection point, so a run never
//! depends on which worker executed it or on what ran before it.

use std::ops::Range;

use rayon::prelude::*;

use crate::cache::{Hierarchy, Level, NoFaults, Ownership};
use crate::config::{RunConfig, WorkloadSource};
use crate::error::{Error, Result};
use crate::injection::{self, DrawModel, Fault, Field, InjectionRecord, Target};
use crate::metrics::CampaignCounters;
use crate::seed::{self, Stream};
use crate::system::{self, Annualized, ControllerRun, DualFaults, RedundancyMode, SystemStats};
use crate::tracker::{LoggedEvent, RunOutcome, Tracker};
use crate::workload::{self, AccessEvent, Expander, Request};

/// How often a faulty run checks whether any fault is left.
const RESIDUE_CHECK: usize = 64;

/// One simulated upset and what it led to.
#[derive(Debug, Clone)]
pub struct InjectionResult {
    pub index: u64,
    /// 0 for the primary controller, 1 for the partner of a dual system.
    pub controller: u8,
    pub fault: Fault,
    pub records: Vec<InjectionRecord>,
    pub outcome: RunOutcome,
    /// Seconds into the workload at which the controller rebooted.
    pub reboot_at: Option<f64>,
}

impl InjectionResult {
    pub fn field(&self) -> Field {
        self.fault.field()
    }

    /// Ownership of the first struck block when the upset happened.
    pub fn ownership(&self) -> Ownership {
        self.records.first().map_or(Ownership::InvalidSpace, |r| r.ownership)
    }

    pub fn controller_run(&self) -> ControllerRun {
        ControllerRun {
            reboot_at: self.reboot_at,
            dl_bytes: self.outcome.total_dl_bytes(),
            dl_events: self.outcome.dl_events(),
        }
    }
}

/// Mean share of lines per owner, `[level][ownership]`.
pub type Occupancy = [[f64; 3]; 2];

/// Aggregated result of a campaign.
#[derive(Debug, Clone)]
pub struct CampaignReport {
    pub config: RunConfig,
    pub n: u64,
    pub counters: CampaignCounters,
    pub system: SystemStats,
    /// Upsets per controller per year used for annualization.
    pub events_per_year: f64,
    pub annual: Annualized,
    pub occupancy: Occupancy,
    pub accesses: u64,
    pub window: Range<u64>,
    pub results: Vec<InjectionResult>,
}

impl CampaignReport {
    pub fn events(&self) -> impl Iterator<Item = (&InjectionResult, &LoggedEvent)> {
        self.results.iter().flat_map(|r| r.outcome.events.iter().map(move |e| (r, e)))
    }
}

/// A prepared campaign: expanded access stream plus warmed caches.
#[derive(Debug, Clone)]
pub struct Campaign {
    config: RunConfig,
    n: u64,
    stream: Vec<AccessEvent>,
    warm: Hierarchy,
    warm_pos: usize,
    window: Range<u64>,
}

#[derive(Debug, Clone)]
struct Job {
    index: u64,
    controller: u8,
    fault: Fault,
}

impl Campaign {
    /// Validates `config`, loads or generates the workload and warms the
    /// caches.
    pub fn prepare(config: &RunConfig) -> Result<Campaign> {
        config.validate()?;
        let w = &config.workload;
        let requests = match &w.source {
            WorkloadSource::Synthetic => workload::gen_synthetic(&w.synthetic, config.seed, w.requests)?,
            WorkloadSource::Trace(path) => {
                let mut r = workload::parse_trace(path)?;
                r.truncate(w.requests);
                r
            }
        };
        Campaign::with_requests(config, &requests)
    }

    /// Like [`Campaign::prepare`] with an explicit request stream.
    pub fn with_requests(config: &RunConfig, requests: &[Request]) -> Result<Campaign> {
        config.validate()?;
        let warm_requests = config.workload.warmup_requests;
        if requests.len() <= warm_requests {
            return Err(Error::config(
                "workload.warmup_requests",
                format!("workload has {} requests, not more than the {warm_requests} warm-up requests", requests.len()),
            ));
        }
        let g = &config.geometry;
        let mut expander = Expander::new(config.workload.access, config.address_map, g.word_bytes, g.line_bytes, config.seed);
        let mut stream = Vec::new();
        for r in &requests[..warm_requests] {
            expander.expand(r, &mut stream);
        }
        let warm_pos = stream.len();
        for r in &requests[warm_requests..] {
            expander.expand(r, &mut stream);
        }
        let start = stream[warm_pos].cycle;
        let end = stream.last().map_or(start, |a| a.cycle) + 1;

        let mut warm = Hierarchy::new(*g, config.address_map);
        for a in &stream[..warm_pos] {
            warm.access(a.addr, a.op, a.cycle, &mut NoFaults);
        }
        Ok(Campaign { config: config.clone(), n: config.resolve_n()?, stream, warm, warm_pos, window: start..end })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn stream(&self) -> &[AccessEvent] {
        &self.stream
    }

    /// Fault-free hierarchy at the start of the measurement window.
    pub fn warm_state(&self) -> &Hierarchy {
        &self.warm
    }

    /// Tick range over which upsets are spread.
    pub fn window(&self) -> Range<u64> {
        self.window.clone()
    }

    fn controller_seed(&self, controller: u8) -> u64 {
        match controller {
            0 => self.config.seed,
            c => seed::derive(self.config.seed, Stream::SecondController, u64::from(c)),
        }
    }

    /// The upset of run `index` on `controller`.
    pub fn draw(&self, controller: u8, index: u64) -> Fault {
        let model = DrawModel {
            distribution: &self.config.mbu.0,
            geometry: &self.config.geometry,
            targets: &self.config.targets,
            tag_share: self.config.tag_share,
            window: self.window.clone(),
        };
        let mut rng = seed::rng(self.controller_seed(controller), Stream::Injection, index);
        injection::draw_fault(&mut rng, &model)
    }

    fn controllers(&self) -> u8 {
        let r = &self.config.redundancy;
        match (r.mode, r.dual_faults) {
            (RedundancyMode::DualInitiated, DualFaults::Independent) => 2,
            _ => 1,
        }
    }

    /// Runs one upset from the fault-free state `golden`, which must sit at
    /// stream position `pos`.
    fn run_from(&self, golden: &Hierarchy, pos: usize, index: u64, controller: u8, fault: Fault) -> InjectionResult {
        let cfg = &self.config;
        let g = cfg.geometry;
        let mut h = golden.clone();
        let rng = seed::rng(self.controller_seed(controller), Stream::Manifestation, index);
        let mut tracker = Tracker::new(cfg.scheme, cfg.manifestation, rng, cfg.output.event_log);
        let mut records = Vec::with_capacity(fault.sites.len());
        let mut placed = Vec::with_capacity(fault.sites.len());
        for site in &fault.sites {
            let id = records.len() as u8;
            match injection::inject(&mut h, site, cfg.scheme, fault.forced_sdc, id) {
                Ok(rec) => {
                    let line = *h.array(site.level).line(site.set, site.way);
                    tracker.on_inject(&rec, &line, &g, fault.cycle);
                    records.push(rec);
                    placed.push((site.level, site.set, site.way, site.field, id));
                }
                // both cells of an upset landed on one field; it stays one fault
                Err(Error::AlreadyFaulty) => {}
                Err(e) => panic!("drawn site outside the geometry: {e}"),
            }
        }
        let still_faulty = |h: &Hierarchy| {
            placed.iter().any(|&(level, set, way, field, id)| {
                let line = h.array(level).line(set, way);
                match field {
                    Field::Tag => line.tag_fault.is_some_and(|t| t.site == id),
                    Field::Data => line.data_fault.is_some_and(|d| d.site == id),
                }
            })
        };
        for (k, a) in self.stream[pos..].iter().enumerate() {
            if h.access(a.addr, a.op, a.cycle, &mut tracker) == crate::cache::Flow::Reboot {
                break;
            }
            if k % RESIDUE_CHECK == RESIDUE_CHECK - 1 && !still_faulty(&h) {
                break;
            }
        }
        let outcome = tracker.finish();
        let reboot_at = outcome.reboot.map(|r| r.cycle as f64 / cfg.workload.access.accesses_per_second);
        InjectionResult { index, controller, fault, records, outcome, reboot_at }
    }

    /// Runs a single upset in isolation, walking the fault-free state up
    /// to its time first.
    pub fn run_one(&self, controller: u8, index: u64, fault: Fault) -> InjectionResult {
        let mut golden = self.warm.clone();
        let pos = self.advance(&mut golden, self.warm_pos, fault.cycle);
        self.run_from(&golden, pos, index, controller, fault)
    }

    fn advance(&self, golden: &mut Hierarchy, mut pos: usize, cycle: u64) -> usize {
        while pos < self.stream.len() && self.stream[pos].cycle < cycle {
            let a = &self.stream[pos];
            golden.access(a.addr, a.op, a.cycle, &mut NoFaults);
            pos += 1;
        }
        pos
    }

    fn run_batch(&self, jobs: &[Job]) -> Vec<InjectionResult> {
        let mut golden = self.warm.clone();
        let mut pos = self.warm_pos;
        jobs.iter()
            .map(|job| {
                pos = self.advance(&mut golden, pos, job.fault.cycle);
                self.run_from(&golden, pos, job.index, job.controller, job.fault.clone())
            })
            .collect()
    }

    /// Average line ownership over the measurement window.
    pub fn occupancy(&self) -> Occupancy {
        let mut h = self.warm.clone();
        let span = self.stream.len() - self.warm_pos;
        let step = (span / 256).max(1);
        let mut sums = [[0.0; 3]; 2];
        let mut samples = 0.0;
        for (k, a) in self.stream[self.warm_pos..].iter().enumerate() {
            h.access(a.addr, a.op, a.cycle, &mut NoFaults);
            if k % step == step - 1 {
                samples += 1.0;
                for (li, level) in Level::ALL.iter().enumerate() {
                    let census = h.array(*level).census();
                    let total: u64 = census.iter().sum();
                    for o in 0..3 {
                        sums[li][o] += census[o] as f64 / total as f64;
                    }
                }
            }
        }
        if samples > 0.0 {
            for row in sums.iter_mut() {
                for v in row.iter_mut() {
                    *v /= samples;
                }
            }
        }
        sums
    }

    /// Runs every injection and aggregates the report.
    pub fn run(&self) -> Result<CampaignReport> {
        let cfg = &self.config;
        let mut jobs: Vec<Job> = (0..self.controllers())
            .flat_map(|c| (0..self.n).map(move |i| (c, i)))
            .map(|(controller, index)| Job { index, controller, fault: self.draw(controller, index) })
            .collect();
        jobs.sort_by_key(|j| (j.fault.cycle, j.controller, j.index));

        let batches = if cfg.workers == 1 { 1 } else { cfg.workers * 4 };
        let per = jobs.len().div_ceil(batches).max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start {} workers: {e}", cfg.workers)))?;
        let mut results: Vec<InjectionResult> =
            pool.install(|| jobs.par_chunks(per).flat_map_iter(|chunk| self.run_batch(chunk)).collect());
        results.sort_by_key(|r| (r.controller, r.index));

        let mut counters = CampaignCounters::default();
        for r in &results {
            counters.record(r.field(), r.ownership(), r.fault.mbu_size, &r.outcome);
        }
        let mut streams: Vec<Vec<ControllerRun>> = vec![Vec::new(); self.controllers() as usize];
        for r in &results {
            streams[r.controller as usize].push(r.controller_run());
        }
        let system = system::apply_redundancy(&cfg.redundancy, &streams)?;
        let events_per_year = if cfg.targets.contains(&Target::ControlLogic) {
            cfg.ser.annual_events()
        } else {
            cfg.redundancy.seu_per_year
        };
        let annual = system::annualize(&system, self.n, events_per_year)?;
        Ok(CampaignReport {
            config: cfg.clone(),
            n: self.n,
            counters,
            system,
            events_per_year,
            annual,
            occupancy: self.occupancy(),
            accesses: (self.stream.len() - self.warm_pos) as u64,
            window: self.window.clone(),
            results,
        })
    }
}

/// Prepares and runs a campaign in one go.
pub fn run(config: &RunConfig) -> Result<CampaignReport> {
    Campaign::prepare(config)?.run()
}
