use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use daxsim::output::{emit, read_json, RunOutput};
use daxsim::sweep::{sweep, Axis};
use daxsim::{config, missed_detections};
use daxsim_core::config::OutputFormat;
use daxsim_core::{compare, run, ExperimentConfig};

/// Access-driven simulator of redundancy for DAX-mapped NVM.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment, once per seed.
    Run {
        config: PathBuf,
        #[command(flatten)]
        io: Io,
    },
    /// Run the experiment at every point of one or more axes.
    Sweep {
        config: PathBuf,
        /// mode, redundancy_ways, diff_ways, num_dimms or nvm_latency,
        /// optionally `=v1,v2,...`. Repeat for a product.
        #[arg(long, required = true)]
        axis: Vec<Axis>,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        io: Io,
    },
    /// Ratios and deltas of each report against the baseline report with the
    /// same seed. Both files are JSON run outputs.
    Compare { report: PathBuf, baseline: PathBuf },
}

#[derive(Args)]
struct Io {
    /// Output file; stdout if omitted and the config names none.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Replaces the config's seed list. Repeatable.
    #[arg(long)]
    seed: Vec<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl Io {
    fn apply(&self, cfg: &mut ExperimentConfig) {
        if !self.seed.is_empty() {
            cfg.seeds = self.seed.clone();
        }
        if let Some(f) = self.format {
            cfg.output.format = match f {
                Format::Json => OutputFormat::Json,
                Format::Csv => OutputFormat::Csv,
            };
        }
        if let Some(p) = &self.out {
            cfg.output.path = Some(p.display().to_string());
        }
    }
}

fn load(path: &Path, io: &Io) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = config::load(path)?;
    io.apply(&mut cfg);
    cfg.validate().map_err(daxsim::Error::Invalid)?;
    Ok(cfg)
}

fn finish(cfg: &ExperimentConfig, out: RunOutput) -> anyhow::Result<ExitCode> {
    emit(&out, cfg.output.format, cfg.output.path.as_deref().map(Path::new))?;
    let missed = missed_detections(&out.reports);
    if missed > 0 {
        eprintln!("daxsim: {missed} corrupted reads went undetected in a verifying mode");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> anyhow::Result<ExitCode> {
    match Cli::parse().cmd {
        Cmd::Run { config, io } => {
            let cfg = load(&config, &io)?;
            let reports = run(&cfg).map_err(daxsim::Error::from)?;
            finish(&cfg, RunOutput::new(reports))
        }
        Cmd::Sweep { config, axis, threads, io } => {
            let cfg = load(&config, &io)?;
            let threads = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let reports = sweep(&cfg, &axis, threads)?;
            finish(&cfg, RunOutput::new(reports))
        }
        Cmd::Compare { report, baseline } => {
            let open = |p: &Path| -> anyhow::Result<RunOutput> {
                let f = std::fs::File::open(p).with_context(|| format!("cannot read {}", p.display()))?;
                read_json(std::io::BufReader::new(f)).with_context(|| format!("{} is not a run output", p.display()))
            };
            let (r, b) = (open(&report)?, open(&baseline)?);
            let mut out = Vec::new();
            for rep in &r.reports {
                let Some(base) = b.reports.iter().find(|x| x.seed == rep.seed) else {
                    bail!("baseline has no report for seed {}", rep.seed);
                };
                out.push(compare(rep, base).map_err(daxsim::Error::from)?);
            }
            serde_json::to_writer_pretty(std::io::stdout().lock(), &out)?;
            println!();
            Ok(ExitCode::SUCCESS)
        }
    }
}
