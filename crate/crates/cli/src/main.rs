use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use htif_core::experiment::{parse_config, run_experiment, ExperimentConfig, Outcome, RunOptions, RunReport, Scenario};

/// Heavy-tailed integrate-and-fire network experiments.
#[derive(Parser)]
#[command(name = "htif", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario named in a config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Check the input hypotheses on the generator of a config file.
    Audit {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// First-passage statistics of the abstract +-1 walk.
    Walk {
        /// Config file; the walk defaults are used when absent.
        config: Option<PathBuf>,
        /// Up-jump probability.
        #[arg(long)]
        p: Option<f64>,
        /// Threshold.
        #[arg(long)]
        b: Option<u32>,
        #[arg(long)]
        max_steps: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Multiplies the sample budget, e.g. 0.01 for a smoke run.
    #[arg(long)]
    budget_scale: Option<f64>,
    /// Write the pooled input events to events.csv.
    #[arg(long)]
    dump_events: bool,
}

impl Common {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(dir) = &self.out_dir {
            cfg.output_dir = dir.clone();
        }
        if let Some(f) = self.budget_scale {
            cfg.scale_budget(f)?;
        }
        Ok(())
    }
}

fn load(path: &PathBuf) -> Result<ExperimentConfig> {
    parse_config(path).with_context(|| format!("reading config {}", path.display()))
}

fn execute(cli: Cli) -> Result<RunReport> {
    let (cfg, common) = match cli.command {
        Command::Run { config, common } => (load(&config)?, common),
        Command::Audit { config, common } => {
            let mut cfg = load(&config)?;
            if cfg.scenario != Scenario::HypothesisAudit {
                cfg.scenario = Scenario::HypothesisAudit;
                cfg.budget = None;
            }
            (cfg, common)
        }
        Command::Walk { config, p, b, max_steps, common } => {
            let mut cfg = match config {
                Some(path) => load(&path)?,
                None => ExperimentConfig::new(Scenario::WalkUnit),
            };
            if cfg.scenario != Scenario::WalkUnit {
                cfg.scenario = Scenario::WalkUnit;
                cfg.budget = None;
            }
            cfg.walk.p = p.unwrap_or(cfg.walk.p);
            cfg.walk.b = b.unwrap_or(cfg.walk.b);
            cfg.walk.max_steps = max_steps.unwrap_or(cfg.walk.max_steps);
            (cfg, common)
        }
    };
    let mut cfg = cfg;
    common.apply(&mut cfg)?;
    cfg.validate()?;
    let report = run_experiment(&cfg, RunOptions { dump_events: common.dump_events })?;
    print_summary(&cfg, &report);
    Ok(report)
}

fn print_summary(cfg: &ExperimentConfig, report: &RunReport) {
    println!(
        "{} seed={} budget={} {} config={}",
        cfg.scenario.name(),
        report.seed,
        report.budget,
        report.budget_unit,
        &report.config_hash[..12]
    );
    if let Some(reason) = &report.insufficient {
        println!("  insufficient data: {reason}");
    }
    for c in &report.checks {
        let stats: Vec<String> = c.statistics.iter().map(|(k, v)| format!("{k}={v:.6}")).collect();
        println!("  {:<24} {}  {}", c.name, if c.passed { "PASS" } else { "FAIL" }, stats.join(" "));
    }
    println!("outputs written to {}", cfg.output_dir.display());
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(report) => match report.outcome {
            Outcome::Pass => ExitCode::SUCCESS,
            Outcome::Fail => ExitCode::from(1),
            Outcome::InsufficientData => ExitCode::from(3),
        },
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
