//! Scenario configuration, orchestration and persisted outputs.

mod config;
mod report;
mod scenarios;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

pub use config::{
    parse_config, parse_config_str, ExperimentConfig, GeneratorConfig, OffsetsConfig, ReceiversConfig, Scenario,
    Thresholds, TopologyConfig, WalkConfig, SCHEMA_VERSION,
};
pub use report::{Check, DependenceRow, Outcome, RunReport, ScenarioOutput};

use crate::engine::EventCsvWriter;
use crate::error::{Error, Result};
use crate::input::generate_isi_chunk;
use crate::rng::RngHandle;

/// Environment variable capping the worker threads of replication fan-out.
pub const THREADS_ENV: &str = "HTIF_THREADS";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Also write the pooled input events (`events.csv`).
    pub dump_events: bool,
}

#[derive(Serialize)]
struct Timing {
    scenario: &'static str,
    wall_clock_seconds: f64,
    threads: usize,
}

/// Runs a scenario without touching the filesystem.
pub fn evaluate(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    with_threads(|| report_for(cfg, scenarios::run(cfg, None)))
}

/// Runs a scenario and writes `report.json`, `timing.json` and the CSV tables
/// under `cfg.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, options: RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    let dir = cfg.output_dir.as_path();
    fs::create_dir_all(dir)?;
    let started = Instant::now();
    let (report, output) = with_threads(|| {
        let result = if options.dump_events {
            dump_and_run(cfg, dir)
        } else {
            scenarios::run(cfg, None)
        };
        match scenarios::split_insufficient(result)? {
            Ok(out) => Ok((RunReport::new(cfg, &out), Some(out))),
            Err(reason) => Ok((RunReport::insufficient(cfg, reason), None)),
        }
    })?;
    let timing = Timing {
        scenario: cfg.scenario.name(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
    };

    report::write_json(&dir.join("report.json"), &report)?;
    report::write_json(&dir.join("timing.json"), &timing)?;
    if let Some(out) = output {
        if !out.hill.is_empty() {
            report::write_hill_csv(&dir.join("hill_sweep.csv"), &out.hill)?;
        }
        if !out.dependence.is_empty() {
            report::write_dependence_csv(&dir.join("dependence_ratios.csv"), &out.dependence)?;
        }
        if let Some(s) = &out.spectral {
            report::write_spectral_csv(&dir.join("spectral_histogram.csv"), s)?;
        }
    }
    Ok(report)
}

fn report_for(cfg: &ExperimentConfig, result: Result<ScenarioOutput>) -> Result<RunReport> {
    Ok(match scenarios::split_insufficient(result)? {
        Ok(out) => RunReport::new(cfg, &out),
        Err(reason) => RunReport::insufficient(cfg, reason),
    })
}

// The audit has no event stream; its generated ISIs are written instead.
fn dump_and_run(cfg: &ExperimentConfig, dir: &Path) -> Result<ScenarioOutput> {
    match cfg.scenario {
        Scenario::HypothesisAudit => {
            let spec = cfg.generator_spec()?;
            let chunk = generate_isi_chunk(&spec, cfg.budget() as usize, &RngHandle::new(cfg.seed, 0))?;
            chunk.write_csv(BufWriter::new(File::create(dir.join("isis.csv"))?))?;
            scenarios::run(cfg, None)
        }
        Scenario::WalkUnit => scenarios::run(cfg, None),
        _ => {
            let mut w = EventCsvWriter::new(BufWriter::new(File::create(dir.join("events.csv"))?))?;
            let out = scenarios::run(cfg, Some(&mut w));
            w.finish()?;
            out
        }
    }
}

fn with_threads<T: Send>(f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let threads: usize = v.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| Error::Config {
                key: THREADS_ENV.into(),
                reason: format!("expected a positive thread count, got `{v}`"),
            })?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Config {
                    key: THREADS_ENV.into(),
                    reason: e.to_string(),
                })?;
            pool.install(f)
        }
        Err(_) => f(),
    }
}
