use std::collections::BTreeMap;

use serde::Serialize;

use super::{IsiMatrixChunk, InputGeneratorSpec};
use crate::error::{domain, insufficient, Result};
use crate::stats::{
    default_k, equivalence_ratio, hill_estimate, lagged_exceedance_ratios, spectral_estimate,
    upper_tail_independence, SpectralEstimate, SpherePartition, TailEstimate,
};

pub const MIN_AUDIT_ROUNDS: usize = 10_000;

/// Pass thresholds of the input audit.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditThresholds {
    /// Allowed `|alpha_hat - alpha|` for marginal and radial Hill estimates.
    pub hill_tolerance: f64,
    /// Accepted range of marginal tail ratios against the reference neuron.
    pub equivalence_band: [f64; 2],
    /// Maximum within-neuron lagged joint-exceedance ratio.
    pub independence_max: f64,
    /// Minimum all-neuron joint-exceedance ratio.
    pub dependence_min: f64,
    /// Quantile level of the H2-H4 statistics.
    pub quantile: f64,
    pub max_lag: usize,
    pub radial_t: Vec<f64>,
    pub radial_quantile: f64,
    pub radial_max_deviation: f64,
}

impl Default for AuditThresholds {
    fn default() -> Self {
        Self {
            hill_tolerance: 0.1,
            equivalence_band: [0.5, 2.0],
            independence_max: 0.05,
            dependence_min: 0.05,
            quantile: 0.999,
            max_lag: 5,
            radial_t: vec![2.0, 4.0],
            radial_quantile: 0.995,
            radial_max_deviation: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub passed: bool,
    pub statistics: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub rounds: usize,
    pub neurons: usize,
    pub alpha: f64,
    /// Marginal that plays the controlling tail `W_T`.
    pub reference: String,
    pub marginal_tails: Vec<TailEstimate>,
    pub checks: Vec<HypothesisCheck>,
    pub spectral: Option<SpectralEstimate>,
}

impl HypothesisReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Checks the four input hypotheses on a generated chunk.
///
/// * H1: the column vectors have a regularly varying L1 radius with index `alpha`.
/// * H2: every row has Hill index `alpha` and a tail equivalent to neuron 0.
/// * H3: each row is pairwise upper-tail independent across lags.
/// * H4: all neurons of a round exceed jointly at the rate of neuron 0 alone.
pub fn validate_hypotheses(
    chunk: &IsiMatrixChunk,
    spec: &InputGeneratorSpec,
    thresholds: &AuditThresholds,
) -> Result<HypothesisReport> {
    if chunk.rounds() < MIN_AUDIT_ROUNDS {
        return Err(insufficient("hypothesis audit rounds", MIN_AUDIT_ROUNDS, chunk.rounds()));
    }
    if chunk.neurons() != spec.n {
        return Err(domain(format!(
            "chunk has {} neurons but the generator spec has {}",
            chunk.neurons(),
            spec.n
        )));
    }
    chunk.check_positive()?;
    let alpha = spec.tail.alpha();
    let q = thresholds.quantile;
    let rows: Vec<Vec<f64>> = (0..chunk.neurons()).map(|i| chunk.row(i)).collect();
    let k = default_k(chunk.rounds());

    // H1
    let norms: Vec<f64> = chunk.columns().map(|c| c.iter().sum()).collect();
    let radial = crate::stats::radial_check_norms(&norms, &thresholds.radial_t, &[thresholds.radial_quantile])?;
    let spectral = if chunk.neurons() >= 2 {
        let vectors: Vec<&[f64]> = chunk.columns().collect();
        Some(spectral_estimate(&vectors, thresholds.radial_quantile, SpherePartition::new(10)?)?)
    } else {
        None
    };
    let mut h1 = BTreeMap::new();
    h1.insert("radius_alpha_hat".into(), radial.tail.alpha_hat);
    h1.insert("radial_max_deviation".into(), radial.max_deviation);
    let h1_pass = (radial.tail.alpha_hat - alpha).abs() <= thresholds.hill_tolerance
        && radial.max_deviation <= thresholds.radial_max_deviation;

    // H2
    let marginal_tails = rows
        .iter()
        .map(|r| hill_estimate(r, k))
        .collect::<Result<Vec<_>>>()?;
    let worst_hill = marginal_tails
        .iter()
        .map(|e| (e.alpha_hat - alpha).abs())
        .fold(0.0, f64::max);
    let mut ratio_lo = f64::INFINITY;
    let mut ratio_hi = 0.0f64;
    for r in &rows[1..] {
        let c = equivalence_ratio(r, &rows[0], &[q])?;
        ratio_lo = ratio_lo.min(c.points[0].ratio);
        ratio_hi = ratio_hi.max(c.points[0].ratio);
    }
    if rows.len() == 1 {
        ratio_lo = 1.0;
        ratio_hi = 1.0;
    }
    let mut h2 = BTreeMap::new();
    h2.insert("max_abs_hill_error".into(), worst_hill);
    h2.insert("min_equivalence_ratio".into(), ratio_lo);
    h2.insert("max_equivalence_ratio".into(), ratio_hi);
    let [band_lo, band_hi] = thresholds.equivalence_band;
    let h2_pass = worst_hill <= thresholds.hill_tolerance && ratio_lo >= band_lo && ratio_hi <= band_hi;

    // H3
    let lags: Vec<usize> = (1..=thresholds.max_lag).collect();
    let mut worst_lag = 0.0f64;
    for r in &rows {
        let m = lagged_exceedance_ratios(r, &lags, &[q], MIN_AUDIT_ROUNDS)?;
        worst_lag = worst_lag.max(m.max_over(q, |_| true).unwrap_or(0.0));
    }
    let mut h3 = BTreeMap::new();
    h3.insert("max_lagged_ratio".into(), worst_lag);
    let h3_pass = worst_lag <= thresholds.independence_max;

    // H4
    let mins: Vec<f64> = chunk
        .columns()
        .map(|c| c.iter().cloned().fold(f64::INFINITY, f64::min))
        .collect();
    let joint = upper_tail_independence(&mins, &mins, &rows[0], "neuron 0", &[q])?;
    let ratio = joint.points[0].ratio;
    let mut h4 = BTreeMap::new();
    h4.insert("joint_exceedance_ratio".into(), ratio);
    let h4_pass = ratio >= thresholds.dependence_min;

    let checks = vec![
        HypothesisCheck { name: "H1", passed: h1_pass, statistics: h1 },
        HypothesisCheck { name: "H2", passed: h2_pass, statistics: h2 },
        HypothesisCheck { name: "H3", passed: h3_pass, statistics: h3 },
        HypothesisCheck { name: "H4", passed: h4_pass, statistics: h4 },
    ];
    Ok(HypothesisReport {
        rounds: chunk.rounds(),
        neurons: chunk.neurons(),
        alpha,
        reference: "neuron 0".into(),
        marginal_tails,
        checks,
        spectral,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::input::{generate_isi_chunk, Coupling, GeneratorMode};
    use crate::rng::RngHandle;
    use crate::rv::{MultiplierBounds, TailModel};

    fn spec(mode: GeneratorMode, coupling: Coupling) -> InputGeneratorSpec {
        InputGeneratorSpec::new(
            3,
            TailModel::new(0.6, 1.0).unwrap(),
            MultiplierBounds::new(0.5, 2.0).unwrap(),
            mode,
            coupling,
        )
        .unwrap()
    }

    #[test]
    fn common_shock_passes_all() {
        for coupling in [Coupling::Multiplicative, Coupling::Additive] {
            let s = spec(GeneratorMode::RoundSynchronizedCommonShock, coupling);
            let chunk = generate_isi_chunk(&s, 300_000, &RngHandle::new(12, 0)).unwrap();
            let r = validate_hypotheses(&chunk, &s, &AuditThresholds::default()).unwrap();
            assert!(r.all_passed(), "{coupling:?}: {:#?}", r.checks);
        }
    }

    #[test]
    fn independent_baseline_fails_full_dependence_only() {
        let s = spec(GeneratorMode::IndependentBaseline, Coupling::Multiplicative);
        let chunk = generate_isi_chunk(&s, 300_000, &RngHandle::new(13, 0)).unwrap();
        let r = validate_hypotheses(&chunk, &s, &AuditThresholds::default()).unwrap();
        assert!(!r.check("H4").unwrap().passed);
        assert!(r.check("H4").unwrap().statistics["joint_exceedance_ratio"] < 0.01);
        for h in ["H1", "H2", "H3"] {
            assert!(r.check(h).unwrap().passed, "{h}: {:#?}", r.checks);
        }
    }

    #[test]
    fn short_chunk_is_insufficient() {
        let s = spec(GeneratorMode::RoundSynchronizedCommonShock, Coupling::Multiplicative);
        let chunk = generate_isi_chunk(&s, 500, &RngHandle::new(1, 0)).unwrap();
        assert!(matches!(
            validate_hypotheses(&chunk, &s, &AuditThresholds::default()),
            Err(crate::Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn nonpositive_entry_is_invariant_violation() {
        let s = spec(GeneratorMode::RoundSynchronizedCommonShock, Coupling::Multiplicative);
        let mut chunk = generate_isi_chunk(&s, MIN_AUDIT_ROUNDS, &RngHandle::new(1, 0)).unwrap();
        chunk.set(0, 17, -3.0);
        assert!(matches!(
            validate_hypotheses(&chunk, &s, &AuditThresholds::default()),
            Err(crate::Error::InvariantViolation(_))
        ));
    }
}
