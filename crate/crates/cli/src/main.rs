use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use ssvf::config::{MbuChoice, SampleCount, WorkloadSource};
use ssvf::ecc::{ProtectionScheme, SchemeKind};
use ssvf::injection::MbuDistribution;
use ssvf::system::RedundancyMode;
use ssvf::{report, Campaign, RunConfig};

/// Fault-injection campaigns on a storage-controller cache model.
#[derive(Parser)]
#[command(name = "ssvf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one campaign and write its report.
    Run(RunArgs),
    /// Put several reports of the same machine and workload side by side.
    Compare {
        /// Report directories or summary files.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
        /// Also write the table to this CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// none, parity, interleaved-parity, secded, interleaved-secded or dected.
    #[arg(long)]
    scheme: Option<SchemeKind>,
    /// Trace file, or `synthetic`.
    #[arg(long)]
    workload: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Injection count, or `auto`.
    #[arg(long)]
    n: Option<SampleCount>,
    /// single or dual.
    #[arg(long)]
    redundancy: Option<RedundancyMode>,
    /// dixit or oliveira.
    #[arg(long)]
    mbu: Option<MbuDistribution>,
    #[arg(long)]
    workers: Option<usize>,
    /// Report directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write every tracked event to events.csv.
    #[arg(long)]
    event_log: bool,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(kind) = self.scheme {
            cfg.scheme = ProtectionScheme::standard(kind);
        }
        if let Some(w) = &self.workload {
            cfg.workload.source = WorkloadSource::try_from(w.clone())?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(n) = self.n {
            cfg.n = n;
        }
        if let Some(mode) = self.redundancy {
            cfg.redundancy.mode = mode;
        }
        if let Some(mbu) = &self.mbu {
            cfg.mbu = MbuChoice(mbu.clone());
        }
        if let Some(workers) = self.workers {
            cfg.workers = workers;
        }
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if self.event_log {
            cfg.output.event_log = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(args: RunArgs) -> Result<()> {
    let cfg = args.config()?;
    let campaign = Campaign::prepare(&cfg)?;
    eprintln!("running {} injections ({}, {})", campaign.n(), cfg.scheme, cfg.mbu.0.name());
    let result = campaign.run()?;
    let files = report::write_report(&result, &cfg.output.dir)
        .with_context(|| format!("writing report to {}", cfg.output.dir.display()))?;
    let summary = report::summary(&result)?;
    for key in ["n", "ssvf_du", "ssvf_dl", "du_minutes_per_year", "dl_bytes_per_year"] {
        println!("{key}={}", summary.get(key).unwrap_or("na"));
    }
    eprintln!("wrote {} files to {}", files.len(), cfg.output.dir.display());
    Ok(())
}

fn compare(reports: &[PathBuf], out: Option<PathBuf>) -> Result<()> {
    let table = report::compare(reports)?;
    let csv = table.to_csv()?;
    print!("{csv}");
    if let Some(path) = out {
        report::write_atomic(&path, csv.as_bytes())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Compare { reports, out } => compare(&reports, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
