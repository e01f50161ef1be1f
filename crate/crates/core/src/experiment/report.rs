use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::config::{ExperimentConfig, Scenario, SCHEMA_VERSION};
use crate::error::Result;
use crate::stats::{DependenceRatio, EquivalenceCurve, LagMatrix, SpectralEstimate, TailEstimate};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub statistics: BTreeMap<String, f64>,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, statistics: &[(&str, f64)]) -> Self {
        Self {
            name: name.into(),
            passed,
            statistics: statistics.iter().map(|&(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    /// The budget was too small for a statistic; distinct from a failed check.
    InsufficientData,
}

/// One line of `dependence_ratios.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DependenceRow {
    pub kind: String,
    pub series: String,
    pub lag: Option<usize>,
    pub quantile: f64,
    pub threshold: f64,
    pub ratio: f64,
}

/// Everything a scenario hands back for reporting.
#[derive(Clone, Debug, Default)]
pub struct ScenarioOutput {
    pub checks: Vec<Check>,
    pub reference: Option<String>,
    pub samples: BTreeMap<String, u64>,
    pub estimates: serde_json::Map<String, serde_json::Value>,
    pub hill: Vec<(String, Vec<TailEstimate>)>,
    pub dependence: Vec<DependenceRow>,
    pub spectral: Option<SpectralEstimate>,
}

impl ScenarioOutput {
    pub fn estimate(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.estimates.insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    pub fn sample_count(&mut self, key: &str, n: usize) {
        self.samples.insert(key.to_string(), n as u64);
    }

    pub fn equivalence(&mut self, series: &str, curve: &EquivalenceCurve) {
        self.dependence.extend(curve.points.iter().map(|p| DependenceRow {
            kind: "equivalence".into(),
            series: series.into(),
            lag: None,
            quantile: p.quantile,
            threshold: p.threshold,
            ratio: p.ratio,
        }));
    }

    pub fn joint(&mut self, series: &str, ratio: &DependenceRatio) {
        self.dependence.extend(ratio.points.iter().map(|p| DependenceRow {
            kind: "joint_exceedance".into(),
            series: series.into(),
            lag: None,
            quantile: p.quantile,
            threshold: p.threshold,
            ratio: p.ratio,
        }));
    }

    pub fn lagged(&mut self, series: &str, m: &LagMatrix) {
        for (l, &lag) in m.lags.iter().enumerate() {
            for (q, &quantile) in m.quantiles.iter().enumerate() {
                self.dependence.push(DependenceRow {
                    kind: "lagged".into(),
                    series: series.into(),
                    lag: Some(lag),
                    quantile,
                    threshold: m.thresholds[q],
                    ratio: m.ratios[l][q],
                });
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub scenario: Scenario,
    pub seed: u64,
    pub config_hash: String,
    pub budget: u64,
    pub budget_unit: String,
    pub outcome: Outcome,
    /// Explanation when the outcome is `insufficient_data`.
    pub insufficient: Option<String>,
    /// Empirical marginal standing in for the controlling tail.
    pub reference: Option<String>,
    pub samples: BTreeMap<String, u64>,
    pub checks: Vec<Check>,
    pub estimates: serde_json::Map<String, serde_json::Value>,
}

impl RunReport {
    pub(crate) fn new(cfg: &ExperimentConfig, out: &ScenarioOutput) -> Self {
        let passed = out.checks.iter().all(|c| c.passed);
        Self {
            schema_version: SCHEMA_VERSION,
            scenario: cfg.scenario,
            seed: cfg.seed,
            config_hash: cfg.hash(),
            budget: cfg.budget(),
            budget_unit: cfg.scenario.budget_unit().0.into(),
            outcome: if passed { Outcome::Pass } else { Outcome::Fail },
            insufficient: None,
            reference: out.reference.clone(),
            samples: out.samples.clone(),
            checks: out.checks.clone(),
            estimates: out.estimates.clone(),
        }
    }

    pub(crate) fn insufficient(cfg: &ExperimentConfig, reason: String) -> Self {
        let mut r = Self::new(cfg, &ScenarioOutput::default());
        r.outcome = Outcome::InsufficientData;
        r.insufficient = Some(reason);
        r
    }

    pub fn passed(&self) -> bool {
        self.outcome == Outcome::Pass
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub(crate) fn write_hill_csv(path: &Path, series: &[(String, Vec<TailEstimate>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["series", "k", "alpha_hat", "ci_low", "ci_high", "n_samples"])?;
    for (name, sweep) in series {
        for e in sweep {
            w.write_record([
                name.clone(),
                e.k.to_string(),
                e.alpha_hat.to_string(),
                e.ci_low.to_string(),
                e.ci_high.to_string(),
                e.n_samples.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn write_dependence_csv(path: &Path, rows: &[DependenceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["kind", "series", "lag", "quantile", "threshold", "ratio"])?;
    for r in rows {
        w.write_record([
            r.kind.clone(),
            r.series.clone(),
            r.lag.map(|l| l.to_string()).unwrap_or_default(),
            r.quantile.to_string(),
            r.threshold.to_string(),
            r.ratio.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Cells are written as `;`-joined per-axis bin indices.
pub(crate) fn write_spectral_csv(path: &Path, est: &SpectralEstimate) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["cell", "mass"])?;
    for (cell, mass) in &est.histogram {
        let cell: Vec<String> = cell.iter().map(|c| c.to_string()).collect();
        w.write_record([cell.join(";"), mass.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
