//! Command-line front end. The binary is a thin wrapper over [`main_with`].

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, Method, SweepSpec};
use crate::error::{Error, Result};
use crate::harness::{ablation_suite, run_seeds, severity_sweep};
use crate::output::{self, OutputDir, RunManifest};
use crate::plant::ShiftFamily;

#[derive(Debug, Parser)]
#[command(name = "sagres", version, about = "Gated residual control experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode per seed and write traces, metrics and a manifest.
    Run(Common),
    /// Severity sweep over one shift family.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Sweep spec (TOML). Without it the family's default grid is used.
        #[arg(long)]
        sweep: Option<PathBuf>,
        /// Family for the default grid when no spec file is given.
        #[arg(long)]
        family: Option<ShiftFamily>,
    },
    /// Residual-full against its single-mechanism ablations.
    Ablate(Common),
    /// Parse and validate a config, then print the resolved form.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated seed list overriding the config.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// frozen, residual-full or residual-unconstrained.
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub quiet: bool,
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_path(&common.config)?;
    if let Some(seeds) = &common.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(m) = common.method {
        cfg.method = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn say(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        eprintln!("{}", msg.as_ref());
    }
}

pub fn cmd_run(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let outs = run_seeds(&cfg, cfg.method, &cfg.seeds)?;
    let mut dir = OutputDir::create(&common.out)?;
    for o in &outs {
        dir.write(&format!("trace_seed{}.csv", o.seed), &output::trace_csv(&o.trace))?;
    }
    dir.write("metrics.json", &output::run_summary_json(&cfg, &outs)?)?;
    let mut manifest = RunManifest::new("run", &cfg, cfg.seeds.clone());
    manifest.outputs = dir.written.clone();
    manifest.wall_clock_s = outs.iter().map(|o| o.wall.as_secs_f64()).collect();
    dir.write("manifest.json", &manifest.to_json())?;
    say(common.quiet, format!("wrote {} files to {}", dir.written.len(), dir.path().display()));
    Ok(())
}

pub fn cmd_sweep(common: &Common, spec: Option<&PathBuf>, family: Option<ShiftFamily>) -> Result<()> {
    let cfg = load(common)?;
    let spec = match spec {
        Some(p) => SweepSpec::from_path(p)?,
        None => {
            let family = family
                .or_else(|| cfg.shift.as_ref().map(|s| s.family))
                .ok_or_else(|| Error::config("sweep", "no sweep spec, --family or [shift] given"))?;
            SweepSpec {
                family,
                severities: SweepSpec::grid(family),
                trials: None,
                methods: vec![Method::Frozen, Method::ResidualFull],
            }
        }
    };
    let res = severity_sweep(&cfg, &spec)?;
    let mut dir = OutputDir::create(&common.out)?;
    dir.write("sweep_long.csv", &output::sweep_long_csv(&res))?;
    dir.write("sweep_aggregate.csv", &output::sweep_aggregate_csv(&res))?;
    let seeds: Vec<u64> = cfg.seeds[..spec.trials.unwrap_or(cfg.seeds.len()).min(cfg.seeds.len())].to_vec();
    let mut manifest = RunManifest::new("sweep", &cfg, seeds);
    manifest.outputs = dir.written.clone();
    manifest.wall_clock_s = res.records.iter().map(|r| r.wall.as_secs_f64()).collect();
    dir.write("manifest.json", &manifest.to_json())?;
    say(common.quiet, format!("{} episodes, {} cells", res.records.len(), res.cells.len()));
    Ok(())
}

pub fn cmd_ablate(common: &Common) -> Result<()> {
    let cfg = load(common)?;
    let rows = ablation_suite(&cfg, &cfg.seeds)?;
    let mut dir = OutputDir::create(&common.out)?;
    dir.write("ablation.csv", &output::ablation_csv(&rows))?;
    dir.write("ablation_long.csv", &output::ablation_long_csv(&rows))?;
    let mut manifest = RunManifest::new("ablate", &cfg, cfg.seeds.clone());
    manifest.outputs = dir.written.clone();
    dir.write("manifest.json", &manifest.to_json())?;
    say(common.quiet, format!("{} variants", rows.len()));
    Ok(())
}

pub fn cmd_validate(config: &PathBuf, quiet: bool) -> Result<()> {
    let cfg = ExperimentConfig::from_path(config)?;
    if !quiet {
        println!("# config hash {}", cfg.hash());
        print!("{}", cfg.to_toml());
    }
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Sweep { common, sweep, family } => cmd_sweep(common, sweep.as_ref(), *family),
        Command::Ablate(c) => cmd_ablate(c),
        Command::Validate { config, quiet } => cmd_validate(config, *quiet),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
