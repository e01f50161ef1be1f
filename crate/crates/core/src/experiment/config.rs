use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{ReceiverConfig, DEFAULT_MAX_STEPS};
use crate::engine::{NetworkTopology, Offsets};
use crate::error::{Error, Result};
use crate::input::{AuditThresholds, Coupling, GeneratorMode, InputGeneratorSpec};
use crate::rv::{MultiplierBounds, TailModel};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    ForwardRecurrenceRv,
    TauIndependence,
    OutputRv,
    OutputIndependence,
    JointMrv,
    FullDependence,
    HypothesisAudit,
    WalkUnit,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::ForwardRecurrenceRv => "forward_recurrence_rv",
            Scenario::TauIndependence => "tau_independence",
            Scenario::OutputRv => "output_rv",
            Scenario::OutputIndependence => "output_independence",
            Scenario::JointMrv => "joint_mrv",
            Scenario::FullDependence => "full_dependence",
            Scenario::HypothesisAudit => "hypothesis_audit",
            Scenario::WalkUnit => "walk_unit",
        }
    }

    /// What one unit of `budget` counts, and its default.
    pub fn budget_unit(self) -> (&'static str, u64) {
        match self {
            Scenario::ForwardRecurrenceRv => ("replications", 100_000),
            Scenario::TauIndependence => ("waiting times", 1_000_000),
            Scenario::OutputRv | Scenario::OutputIndependence => ("output ISIs", 100_000),
            Scenario::JointMrv | Scenario::FullDependence => ("replications", 1_000_000),
            Scenario::HypothesisAudit => ("rounds", 1_000_000),
            Scenario::WalkUnit => ("replications", 100_000),
        }
    }

    fn uses_receivers(self) -> bool {
        matches!(
            self,
            Scenario::OutputRv | Scenario::OutputIndependence | Scenario::JointMrv | Scenario::FullDependence
        )
    }

    fn uses_pool_b(self) -> bool {
        matches!(self, Scenario::JointMrv | Scenario::FullDependence)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n: usize,
    pub alpha: f64,
    pub scale: f64,
    pub multiplier_lo: f64,
    pub multiplier_hi: f64,
    pub mode: GeneratorMode,
    pub coupling: Coupling,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n: 3,
            alpha: 0.6,
            scale: 1.0,
            multiplier_lo: 0.5,
            multiplier_hi: 2.0,
            mode: GeneratorMode::RoundSynchronizedCommonShock,
            coupling: Coupling::Multiplicative,
        }
    }
}

/// Neuron indices are 0-based. Missing pools default to all neurons.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub inhibitory: Vec<usize>,
    pub pool_a: Option<Vec<usize>>,
    pub pool_b: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiversConfig {
    pub threshold_a: u32,
    pub threshold_b: u32,
}

impl Default for ReceiversConfig {
    fn default() -> Self {
        Self {
            threshold_a: 5,
            threshold_b: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkConfig {
    pub p: f64,
    pub b: u32,
    pub max_steps: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            p: 0.7,
            b: 10,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

/// `"zero"` or one nonnegative offset per neuron.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OffsetsConfig {
    #[default]
    #[serde(with = "zero_token")]
    Zero,
    Given(Vec<f64>),
}

mod zero_token {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("zero")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "zero" {
            Ok(())
        } else {
            Err(D::Error::custom(format!("expected \"zero\" or a list of offsets, got \"{s}\"")))
        }
    }
}

/// Pass thresholds. `hill_tolerance` defaults per scenario when absent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub hill_tolerance: Option<f64>,
    pub equivalence_band: [f64; 2],
    pub independence_max: f64,
    pub dependence_min: f64,
    pub quantile: f64,
    pub max_lag: usize,
    pub output_lags: usize,
    pub radial_t: Vec<f64>,
    pub radial_quantile: f64,
    pub radial_max_deviation: f64,
    pub walk_mean_relative: f64,
    pub walk_fraction_absolute: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        let a = AuditThresholds::default();
        Self {
            hill_tolerance: None,
            equivalence_band: a.equivalence_band,
            independence_max: a.independence_max,
            dependence_min: a.dependence_min,
            quantile: a.quantile,
            max_lag: a.max_lag,
            output_lags: 10,
            radial_t: a.radial_t,
            radial_quantile: a.radial_quantile,
            radial_max_deviation: a.radial_max_deviation,
            walk_mean_relative: 0.02,
            walk_fraction_absolute: 0.003,
        }
    }
}

impl Thresholds {
    pub fn hill_tolerance_for(&self, scenario: Scenario) -> f64 {
        self.hill_tolerance.unwrap_or(match scenario {
            Scenario::ForwardRecurrenceRv => 0.07,
            Scenario::TauIndependence => 0.05,
            _ => 0.1,
        })
    }

    pub fn audit(&self) -> AuditThresholds {
        AuditThresholds {
            hill_tolerance: self.hill_tolerance_for(Scenario::HypothesisAudit),
            equivalence_band: self.equivalence_band,
            independence_max: self.independence_max,
            dependence_min: self.dependence_min,
            quantile: self.quantile,
            max_lag: self.max_lag,
            radial_t: self.radial_t.clone(),
            radial_quantile: self.radial_quantile,
            radial_max_deviation: self.radial_max_deviation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub scenario: Scenario,
    #[serde(default)]
    pub seed: u64,
    /// Sample budget in the scenario's unit; see [`Scenario::budget_unit`].
    #[serde(default)]
    pub budget: Option<u64>,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub topology: TopologyConfig,
    #[serde(default)]
    pub receivers: ReceiversConfig,
    #[serde(default)]
    pub offsets: OffsetsConfig,
    #[serde(default)]
    pub walk: WalkConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn bad(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        reason: reason.into(),
    }
}

/// Reads and validates a JSON config; unknown keys are rejected.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

impl ExperimentConfig {
    /// Defaults for everything but the scenario.
    pub fn new(scenario: Scenario) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario,
            seed: 0,
            budget: None,
            generator: GeneratorConfig::default(),
            topology: TopologyConfig::default(),
            receivers: ReceiversConfig::default(),
            offsets: OffsetsConfig::default(),
            walk: WalkConfig::default(),
            thresholds: Thresholds::default(),
            output_dir: default_output_dir(),
        }
    }

    pub fn budget(&self) -> u64 {
        self.budget.unwrap_or(self.scenario.budget_unit().1)
    }

    /// Multiplies the budget, rounding up and keeping at least one unit.
    pub fn scale_budget(&mut self, factor: f64) -> Result<()> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(bad("budget", format!("budget scale must be positive, got {factor}")));
        }
        self.budget = Some(((self.budget() as f64 * factor).ceil() as u64).max(1));
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(bad(
                "schema_version",
                format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        if self.budget == Some(0) {
            return Err(bad("budget", "budget must be positive"));
        }
        let g = &self.generator;
        if !(g.alpha > 0.0 && g.alpha < 1.0) {
            return Err(bad(
                "generator.alpha",
                format!("tail index must lie in the open interval (0, 1), got {}", g.alpha),
            ));
        }
        if g.n == 0 {
            return Err(bad("generator.n", "at least one input neuron is required"));
        }
        if !(g.scale > 0.0 && g.scale.is_finite()) {
            return Err(bad("generator.scale", format!("scale must be positive, got {}", g.scale)));
        }
        if !(g.multiplier_lo > 0.0 && g.multiplier_lo <= g.multiplier_hi && g.multiplier_hi.is_finite()) {
            return Err(bad(
                "generator.multiplier_lo",
                format!("need 0 < lo <= hi < inf, got [{}, {}]", g.multiplier_lo, g.multiplier_hi),
            ));
        }
        let t = &self.topology;
        if let Some(&i) = t.inhibitory.iter().find(|&&i| i >= g.n) {
            return Err(bad("topology.inhibitory", format!("neuron {i} outside 0..{}", g.n)));
        }
        for (key, pool) in [("topology.pool_a", &t.pool_a), ("topology.pool_b", &t.pool_b)] {
            if let Some(pool) = pool {
                if pool.is_empty() {
                    return Err(bad(key, "pool must be nonempty"));
                }
                if let Some(&i) = pool.iter().find(|&&i| i >= g.n) {
                    return Err(bad(key, format!("neuron {i} outside 0..{}", g.n)));
                }
            }
        }
        if let OffsetsConfig::Given(v) = &self.offsets {
            if v.len() != g.n {
                return Err(bad("offsets", format!("{} offsets for {} neurons", v.len(), g.n)));
            }
            if let Some(x) = v.iter().find(|&&x| !(x >= 0.0 && x.is_finite())) {
                return Err(bad("offsets", format!("offsets must be nonnegative, got {x}")));
            }
        }
        if self.scenario.uses_receivers() {
            let topo = self.topology()?;
            let mut pools = vec![("topology.pool_a", topo.pool_a())];
            if self.scenario.uses_pool_b() {
                pools.push(("topology.pool_b", topo.pool_b()));
            }
            for (key, pool) in pools {
                if topo.excitatory_fraction(pool) == 0.5 {
                    return Err(bad(key, "pool has as many excitatory as inhibitory neurons: p = 1/2 is excluded from the model"));
                }
            }
            for (key, b) in [("receivers.threshold_a", self.receivers.threshold_a), ("receivers.threshold_b", self.receivers.threshold_b)] {
                if b == 0 {
                    return Err(bad(key, "threshold must be at least 1"));
                }
            }
        }
        let w = &self.walk;
        if !(0.0..=1.0).contains(&w.p) {
            return Err(bad("walk.p", format!("jump probability must lie in [0, 1], got {}", w.p)));
        }
        if w.p == 0.5 {
            return Err(bad("walk.p", "p = 1/2 is excluded from the model"));
        }
        if w.b == 0 {
            return Err(bad("walk.b", "threshold must be at least 1"));
        }
        if w.max_steps == 0 || w.max_steps > 1 << 32 {
            return Err(bad("walk.max_steps", "must lie in 1..=2^32"));
        }
        let th = &self.thresholds;
        if !(th.quantile > 0.0 && th.quantile < 1.0) {
            return Err(bad("thresholds.quantile", "must lie in (0, 1)"));
        }
        if !(th.radial_quantile > 0.0 && th.radial_quantile < 1.0) {
            return Err(bad("thresholds.radial_quantile", "must lie in (0, 1)"));
        }
        if th.radial_t.iter().any(|&t| !(t >= 1.0 && t.is_finite())) {
            return Err(bad("thresholds.radial_t", "radial multipliers must be at least 1"));
        }
        if th.output_lags == 0 {
            return Err(bad("thresholds.output_lags", "must be at least 1"));
        }
        Ok(())
    }

    pub fn generator_spec(&self) -> Result<InputGeneratorSpec> {
        let g = &self.generator;
        InputGeneratorSpec::new(
            g.n,
            TailModel::new(g.alpha, g.scale)?,
            MultiplierBounds::new(g.multiplier_lo, g.multiplier_hi)?,
            g.mode,
            g.coupling,
        )
    }

    pub fn topology(&self) -> Result<NetworkTopology> {
        let n = self.generator.n;
        let all: Vec<usize> = (0..n).collect();
        let t = &self.topology;
        NetworkTopology::new(
            n,
            &t.inhibitory,
            t.pool_a.as_deref().unwrap_or(&all),
            t.pool_b.as_deref().unwrap_or(&all),
        )
    }

    pub fn receivers(&self) -> Result<(ReceiverConfig, ReceiverConfig)> {
        let topo = self.topology()?;
        Ok((
            ReceiverConfig::new(self.receivers.threshold_a, topo.pool_a(), "A")?,
            ReceiverConfig::new(self.receivers.threshold_b, topo.pool_b(), "B")?,
        ))
    }

    pub fn offsets(&self) -> Offsets {
        match &self.offsets {
            OffsetsConfig::Zero => Offsets::Zero,
            OffsetsConfig::Given(v) => Offsets::Given(v.clone()),
        }
    }

    /// SHA-256 of the canonical JSON form, without the output directory.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = PathBuf::new();
        canon.budget = Some(self.budget());
        let bytes = serde_json::to_vec(&canon).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = parse_config_str(r#"{"schema_version": 1, "scenario": "walk_unit"}"#).unwrap();
        let mut expected = ExperimentConfig::new(Scenario::WalkUnit);
        expected.seed = 0;
        assert_eq!(cfg, expected);
        assert_eq!(cfg.budget(), 100_000);
        assert_eq!(cfg.walk, WalkConfig { p: 0.7, b: 10, max_steps: 1_000_000 });
        assert_eq!(cfg.offsets(), Offsets::Zero);
    }

    #[test]
    fn offsets_forms() {
        let cfg = parse_config_str(r#"{"schema_version": 1, "scenario": "forward_recurrence_rv", "offsets": [1, 1, 1]}"#).unwrap();
        assert_eq!(cfg.offsets(), Offsets::Given(vec![1.0; 3]));
        let cfg = parse_config_str(r#"{"schema_version": 1, "scenario": "forward_recurrence_rv", "offsets": "zero"}"#).unwrap();
        assert_eq!(cfg.offsets(), Offsets::Zero);
        assert!(parse_config_str(r#"{"schema_version": 1, "scenario": "forward_recurrence_rv", "offsets": "one"}"#).is_err());
        let e = parse_config_str(r#"{"schema_version": 1, "scenario": "forward_recurrence_rv", "offsets": [1, -1, 1]}"#).unwrap_err();
        assert_eq!(key_of(e), "offsets");
    }

    #[test]
    fn rejects_with_key_names() {
        let e = parse_config_str(r#"{"schema_version": 1, "scenario": "output_rv", "generator": {"alpha": 1.2}}"#).unwrap_err();
        assert!(e.to_string().contains("(0, 1)"));
        assert_eq!(key_of(e), "generator.alpha");
        let e = parse_config_str(r#"{"schema_version": 1, "scenario": "walk_unit", "walk": {"p": 0.5}}"#).unwrap_err();
        assert_eq!(key_of(e), "walk.p");
        let e = parse_config_str(r#"{"schema_version": 1, "scenario": "joint_mrv", "topology": {"pool_a": []}}"#).unwrap_err();
        assert_eq!(key_of(e), "topology.pool_a");
        let e = parse_config_str(
            r#"{"schema_version": 1, "scenario": "output_rv", "generator": {"n": 4}, "topology": {"inhibitory": [0, 1]}}"#,
        )
        .unwrap_err();
        assert_eq!(key_of(e), "topology.pool_a");
        let e = parse_config_str(r#"{"schema_version": 2, "scenario": "walk_unit"}"#).unwrap_err();
        assert_eq!(key_of(e), "schema_version");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_config_str(r#"{"schema_version": 1, "scenario": "walk_unit", "sead": 3}"#).is_err());
        assert!(parse_config_str(r#"{"schema_version": 1, "scenario": "walk_unit", "walk": {"q": 0.3}}"#).is_err());
        assert!(parse_config_str(r#"{"schema_version": 1, "scenario": "nope"}"#).is_err());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::new(Scenario::OutputRv);
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        let mut c = a.clone();
        c.budget = Some(100_000);
        assert_eq!(a.hash(), c.hash());
    }

    #[test]
    fn budget_scaling() {
        let mut cfg = ExperimentConfig::new(Scenario::TauIndependence);
        cfg.scale_budget(0.01).unwrap();
        assert_eq!(cfg.budget(), 10_000);
        assert!(cfg.scale_budget(0.0).is_err());
    }
}
