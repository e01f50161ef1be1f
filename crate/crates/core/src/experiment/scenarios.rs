use std::fs::File;
use std::io::BufWriter;

use rayon::prelude::*;

use super::config::{ExperimentConfig, Scenario};
use super::report::{Check, ScenarioOutput};
use crate::dynamics::{abstract_walk_first_passage, output_independence_diagnostic, Receiver, ReceiverConfig, SpikeTrain};
use crate::engine::{tau_independence_diagnostic, Engine, EngineOptions, EventCsvWriter};
use crate::error::{insufficient, Error, Result};
use crate::input::{generate_isi_chunk, validate_hypotheses, ShockGenerator};
use crate::rng::RngHandle;
use crate::stats::{
    default_k, equivalence_ratio, hill_estimate, hill_sweep, lagged_exceedance_ratios, radial_rv_check,
    spectral_estimate, sweep_grid, upper_tail_independence, SpherePartition, TailEstimate, DEFAULT_QUANTILES,
};
use crate::time::Ticks;

pub(crate) type EventSink<'a> = Option<&'a mut EventCsvWriter<BufWriter<File>>>;

/// Pooled events a receiver may consume per requested output ISI.
const EVENTS_PER_SPIKE_CAP: u64 = 1_000;
/// Pooled events a joint replication may run before it is censored.
const EVENTS_PER_REPLICATION_CAP: u64 = 1_000_000;
/// Integer factor of the homogeneity check; integer scaling keeps tick sums exact.
const HOMOGENEITY_FACTOR: u64 = 3;
const SPECTRAL_BINS: usize = 10;

pub(crate) fn run(cfg: &ExperimentConfig, sink: EventSink) -> Result<ScenarioOutput> {
    match cfg.scenario {
        Scenario::ForwardRecurrenceRv => forward_recurrence(cfg, sink),
        Scenario::TauIndependence => tau_independence(cfg, sink),
        Scenario::OutputRv => output_rv(cfg, sink),
        Scenario::OutputIndependence => output_independence(cfg, sink),
        Scenario::JointMrv | Scenario::FullDependence => joint(cfg, sink),
        Scenario::HypothesisAudit => audit(cfg),
        Scenario::WalkUnit => walk(cfg),
    }
}

fn grid(q: f64) -> Vec<f64> {
    let mut g = DEFAULT_QUANTILES.to_vec();
    if !g.contains(&q) {
        g.push(q);
        g.sort_by(f64::total_cmp);
    }
    g
}

fn engine(cfg: &ExperimentConfig, stream: u64, isi_scale: u64) -> Result<Engine<ShockGenerator>> {
    let spec = cfg.generator_spec()?;
    let topo = cfg.topology()?;
    let source = ShockGenerator::new(spec, RngHandle::new(cfg.seed, stream))?;
    let options = EngineOptions {
        scheduling: spec.mode.into(),
        isi_scale,
    };
    Engine::new(source, topo.marks(), &cfg.offsets(), options)
}

fn sweep(samples: &[f64]) -> Result<Vec<TailEstimate>> {
    hill_sweep(samples, &sweep_grid(samples.len()))
}

fn hill_check(name: &str, est: &TailEstimate, alpha: f64, tol: f64) -> Check {
    Check::new(
        name,
        (est.alpha_hat - alpha).abs() <= tol,
        &[
            ("alpha_hat", est.alpha_hat),
            ("alpha", alpha),
            ("tolerance", tol),
            ("k", est.k as f64),
            ("ci_low", est.ci_low),
            ("ci_high", est.ci_high),
        ],
    )
}

fn forward_recurrence(cfg: &ExperimentConfig, sink: EventSink) -> Result<ScenarioOutput> {
    let n = cfg.generator.n;
    let alpha = cfg.generator.alpha;
    let q = cfg.thresholds.quantile;
    let reps = cfg.budget();
    let thetas: Vec<Vec<f64>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let e = engine(cfg, r, 1)?;
            Ok(e.state().residuals().iter().map(|t| t.map_or(0.0, Ticks::as_units)).collect())
        })
        .collect::<Result<_>>()?;
    if let Some(w) = sink {
        let mut e = engine(cfg, 0, 1)?;
        for _ in 0..n {
            w.push(&e.next_event()?.event)?;
        }
    }

    let mut out = ScenarioOutput {
        reference: Some("neuron 0".into()),
        ..ScenarioOutput::default()
    };
    let rows: Vec<Vec<f64>> = (0..n).map(|i| thetas.iter().map(|v| v[i]).collect()).collect();
    let pooled: Vec<f64> = thetas.iter().flatten().copied().collect();
    out.sample_count("replications", thetas.len());
    out.sample_count("residuals", pooled.len());

    let est = hill_estimate(&pooled, default_k(pooled.len()))?;
    out.checks.push(hill_check("pooled_residual_hill", &est, alpha, cfg.thresholds.hill_tolerance_for(cfg.scenario)));
    out.estimate("pooled_residual_tail", est)?;
    out.hill.push(("pooled".into(), sweep(&pooled)?));
    let mut marginal = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        marginal.push(hill_estimate(r, default_k(r.len()))?);
        out.hill.push((format!("neuron {i}"), sweep(r)?));
    }
    out.estimate("marginal_tails", &marginal)?;

    let [lo, hi] = cfg.thresholds.equivalence_band;
    let (mut rmin, mut rmax) = (1.0f64, 1.0f64);
    for (i, r) in rows.iter().enumerate().skip(1) {
        let curve = equivalence_ratio(r, &rows[0], &grid(q))?;
        let at = curve.at(q).map_or(f64::NAN, |p| p.ratio);
        rmin = rmin.min(at);
        rmax = rmax.max(at);
        out.equivalence(&format!("neuron {i} / neuron 0"), &curve);
    }
    out.checks.push(Check::new(
        "marginal_equivalence",
        rmin >= lo && rmax <= hi,
        &[("min_ratio", rmin), ("max_ratio", rmax), ("quantile", q), ("band_low", lo), ("band_high", hi)],
    ));
    if n >= 2 {
        out.spectral = spectral_estimate(&thetas, cfg.thresholds.radial_quantile, SpherePartition::new(SPECTRAL_BINS)?).ok();
    }
    Ok(out)
}

fn tau_independence(cfg: &ExperimentConfig, mut sink: EventSink) -> Result<ScenarioOutput> {
    let n = cfg.generator.n;
    let q = cfg.thresholds.quantile;
    let mut e = engine(cfg, 0, 1)?;
    let budget = cfg.budget() as usize;
    let mut taus = Vec::with_capacity(budget);
    for _ in 0..budget {
        let step = e.next_event()?;
        if let Some(w) = sink.as_deref_mut() {
            w.push(&step.event)?;
        }
        taus.push(step.tau.as_units());
    }
    let mut out = ScenarioOutput::default();
    out.sample_count("waiting_times", taus.len());

    // ties produce zero waiting times, which carry no tail information
    let positive: Vec<f64> = taus.iter().copied().filter(|&t| t > 0.0).collect();
    let est = hill_estimate(&positive, default_k(positive.len()))?;
    out.checks.push(hill_check("waiting_time_hill", &est, cfg.generator.alpha, cfg.thresholds.hill_tolerance_for(cfg.scenario)));
    out.estimate("waiting_time_tail", est)?;
    out.hill.push(("tau".into(), sweep(&positive)?));

    let lags: Vec<usize> = (0..=2 * n).collect();
    let m = tau_independence_diagnostic(&taus, &lags, &grid(q))?;
    let across = m.max_over(q, |l| l >= n).unwrap_or(f64::NAN);
    let within = m.max_over(q, |l| l >= 1 && l < n).unwrap_or(0.0);
    out.checks.push(Check::new(
        "tau_independence",
        across <= cfg.thresholds.independence_max,
        &[
            ("max_ratio_lags_from_n", across),
            ("max_ratio_lags_below_n", within),
            ("quantile", q),
            ("limit", cfg.thresholds.independence_max),
        ],
    ));
    out.checks.push(comonotone_control(&m));
    out.lagged("tau", &m);
    out.estimate("lag_matrix", &m)?;
    Ok(out)
}

fn comonotone_control(m: &crate::stats::LagMatrix) -> Check {
    let worst = m.ratios[0].iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
    Check::new("comonotone_control", worst == 0.0, &[("max_abs_deviation_from_one", worst)])
}

fn simulate_output(cfg: &ExperimentConfig, isi_scale: u64, target: usize, mut sink: EventSink) -> Result<SpikeTrain> {
    let (rcfg, _) = cfg.receivers()?;
    let mut e = engine(cfg, 0, isi_scale)?;
    let mut r = Receiver::new(&rcfg);
    let cap = EVENTS_PER_SPIKE_CAP * u64::from(rcfg.threshold) * target as u64;
    let mut spikes = 0;
    let mut events = 0u64;
    while spikes < target {
        if events == cap {
            return Err(insufficient("output ISIs within the pooled-event cap", target, spikes));
        }
        let ev = e.next_event()?.event;
        events += 1;
        if let Some(w) = sink.as_deref_mut() {
            w.push(&ev)?;
        }
        if rcfg.pool.binary_search(&ev.source).is_ok() && r.push(&ev) {
            spikes += 1;
        }
    }
    Ok(r.finish())
}

fn output_rv(cfg: &ExperimentConfig, sink: EventSink) -> Result<ScenarioOutput> {
    let target = cfg.budget() as usize;
    let t1 = simulate_output(cfg, 1, target, sink)?;
    let t3 = simulate_output(cfg, HOMOGENEITY_FACTOR, target, None)?;
    let mut out = ScenarioOutput::default();
    out.sample_count("output_isis", t1.len());
    let z = t1.isis_units();
    let est = hill_estimate(&z, default_k(z.len()))?;
    out.checks.push(hill_check("output_hill", &est, cfg.generator.alpha, cfg.thresholds.hill_tolerance_for(cfg.scenario)));
    out.estimate("output_tail", est)?;
    out.hill.push(("Z".into(), sweep(&z)?));

    let scaled_mismatches = t1
        .isis
        .iter()
        .zip(&t3.isis)
        .filter(|(a, b)| a.checked_mul(HOMOGENEITY_FACTOR) != Some(**b))
        .count();
    let same_counts = t1.boundaries == t3.boundaries;
    out.checks.push(Check::new(
        "homogeneity",
        scaled_mismatches == 0 && same_counts && t1.len() == t3.len(),
        &[
            ("factor", HOMOGENEITY_FACTOR as f64),
            ("isi_mismatches", scaled_mismatches as f64),
            ("count_mismatch", f64::from(u8::from(!same_counts))),
        ],
    ));
    Ok(out)
}

fn output_independence(cfg: &ExperimentConfig, sink: EventSink) -> Result<ScenarioOutput> {
    let q = cfg.thresholds.quantile;
    let train = simulate_output(cfg, 1, cfg.budget() as usize, sink)?;
    let mut out = ScenarioOutput::default();
    out.sample_count("output_isis", train.len());
    let z = train.isis_units();
    let est = hill_estimate(&z, default_k(z.len()))?;
    out.estimate("output_tail", est)?;
    out.hill.push(("Z".into(), sweep(&z)?));

    let lags: Vec<usize> = (0..=cfg.thresholds.output_lags).collect();
    let m = output_independence_diagnostic(&train, &lags, &grid(q))?;
    let worst = m.max_over(q, |l| l >= 1).unwrap_or(f64::NAN);
    out.checks.push(Check::new(
        "output_independence",
        worst <= cfg.thresholds.independence_max,
        &[("max_ratio", worst), ("quantile", q), ("limit", cfg.thresholds.independence_max)],
    ));
    out.checks.push(comonotone_control(&m));
    out.lagged("Z", &m);
    out.estimate("lag_matrix", &m)?;
    Ok(out)
}

/// First output ISI of both receivers in one replication, or `None` if the
/// event cap is hit first.
fn first_isis(
    cfg: &ExperimentConfig,
    a: &ReceiverConfig,
    b: &ReceiverConfig,
    stream: u64,
    mut sink: EventSink,
) -> Result<Option<(Ticks, Ticks)>> {
    let mut e = engine(cfg, stream, 1)?;
    let (mut ra, mut rb) = (Receiver::new(a), Receiver::new(b));
    let (mut za, mut zb) = (None, None);
    for _ in 0..EVENTS_PER_REPLICATION_CAP {
        let ev = e.next_event()?.event;
        if let Some(w) = sink.as_deref_mut() {
            w.push(&ev)?;
        }
        if za.is_none() && a.pool.binary_search(&ev.source).is_ok() && ra.push(&ev) {
            za = Some(ev.time);
        }
        if zb.is_none() && b.pool.binary_search(&ev.source).is_ok() && rb.push(&ev) {
            zb = Some(ev.time);
        }
        if let (Some(x), Some(y)) = (za, zb) {
            return Ok(Some((x, y)));
        }
    }
    Ok(None)
}

fn joint(cfg: &ExperimentConfig, sink: EventSink) -> Result<ScenarioOutput> {
    let (a, b) = cfg.receivers()?;
    let th = &cfg.thresholds;
    let q = th.quantile;
    let firsts: Vec<Option<(Ticks, Ticks)>> = (0..cfg.budget())
        .into_par_iter()
        .map(|r| first_isis(cfg, &a, &b, r, None))
        .collect::<Result<_>>()?;
    if sink.is_some() {
        first_isis(cfg, &a, &b, 0, sink)?;
    }
    let pairs: Vec<[f64; 2]> = firsts.iter().flatten().map(|(x, y)| [x.as_units(), y.as_units()]).collect();
    let za: Vec<f64> = pairs.iter().map(|p| p[0]).collect();
    let zb: Vec<f64> = pairs.iter().map(|p| p[1]).collect();

    let topo = cfg.topology()?;
    let mut out = ScenarioOutput {
        reference: Some("pooled Z_A and Z_B".into()),
        ..ScenarioOutput::default()
    };
    out.sample_count("pairs", pairs.len());
    out.sample_count("censored_replications", firsts.len() - pairs.len());
    out.sample_count("pool_overlap", topo.overlap());
    out.hill.push(("Z_A".into(), sweep(&za)?));
    out.hill.push(("Z_B".into(), sweep(&zb)?));

    let radial = radial_rv_check(&pairs, &th.radial_t, &[th.radial_quantile])?;
    let tol = th.hill_tolerance_for(cfg.scenario);
    // the pooled sample is tail-equivalent to either marginal whenever they
    // are equivalent to each other, and treats both receivers alike
    let pooled: Vec<f64> = za.iter().chain(&zb).copied().collect();
    let full = upper_tail_independence(&za, &zb, &pooled, "pooled Z_A and Z_B", &grid(q))?;
    let full_a = upper_tail_independence(&za, &zb, &za, "Z_A", &grid(q))?;
    let full_b = upper_tail_independence(&za, &zb, &zb, "Z_B", &grid(q))?;
    let ratio = full.at(q).unwrap_or(f64::NAN);
    out.joint("pooled reference", &full);
    out.joint("Z_A reference", &full_a);
    out.joint("Z_B reference", &full_b);
    out.spectral = spectral_estimate(&pairs, th.radial_quantile, SpherePartition::new(SPECTRAL_BINS)?).ok();

    match cfg.scenario {
        Scenario::JointMrv => {
            out.checks.push(Check::new(
                "radial_rv",
                radial.max_deviation <= th.radial_max_deviation,
                &[
                    ("max_deviation", radial.max_deviation),
                    ("limit", th.radial_max_deviation),
                    ("base_quantile", th.radial_quantile),
                ],
            ));
            out.checks.push(hill_check("norm_hill", &radial.tail, cfg.generator.alpha, tol));
        }
        _ => out.checks.push(Check::new(
            "full_dependence",
            ratio >= th.dependence_min,
            &[
                ("ratio", ratio),
                ("ratio_reference_a", full_a.at(q).unwrap_or(f64::NAN)),
                ("ratio_reference_b", full_b.at(q).unwrap_or(f64::NAN)),
                ("quantile", q),
                ("limit", th.dependence_min),
            ],
        )),
    }
    out.estimate("radial", &radial)?;
    out.estimate("full_dependence", &full)?;
    out.estimate("full_dependence_reference_a", &full_a)?;
    out.estimate("full_dependence_reference_b", &full_b)?;
    Ok(out)
}

fn audit(cfg: &ExperimentConfig) -> Result<ScenarioOutput> {
    let spec = cfg.generator_spec()?;
    let rounds = cfg.budget() as usize;
    let chunk = generate_isi_chunk(&spec, rounds, &RngHandle::new(cfg.seed, 0))?;
    let th = cfg.thresholds.audit();
    let report = validate_hypotheses(&chunk, &spec, &th)?;
    let mut out = ScenarioOutput {
        reference: Some(report.reference.clone()),
        ..ScenarioOutput::default()
    };
    out.sample_count("rounds", rounds);
    out.checks = report
        .checks
        .iter()
        .map(|c| Check {
            name: c.name.to_string(),
            passed: c.passed,
            statistics: c.statistics.clone(),
        })
        .collect();

    let rows: Vec<Vec<f64>> = (0..chunk.neurons()).map(|i| chunk.row(i)).collect();
    for (i, r) in rows.iter().enumerate() {
        out.hill.push((format!("neuron {i}"), sweep(r)?));
    }
    let g = grid(th.quantile);
    for (i, r) in rows.iter().enumerate().skip(1) {
        out.equivalence(&format!("neuron {i} / neuron 0"), &equivalence_ratio(r, &rows[0], &g)?);
    }
    let mins: Vec<f64> = chunk.columns().map(|c| c.iter().copied().fold(f64::INFINITY, f64::min)).collect();
    out.joint("all neurons / neuron 0", &upper_tail_independence(&mins, &mins, &rows[0], "neuron 0", &g)?);
    let lags: Vec<usize> = (1..=th.max_lag).collect();
    for (i, r) in rows.iter().enumerate() {
        out.lagged(&format!("neuron {i}"), &lagged_exceedance_ratios(r, &lags, &g, rounds.min(10_000))?);
    }
    out.spectral = report.spectral.clone();
    out.estimate("marginal_tails", &report.marginal_tails)?;
    Ok(out)
}

fn walk(cfg: &ExperimentConfig) -> Result<ScenarioOutput> {
    let w = &cfg.walk;
    let th = &cfg.thresholds;
    let stats = abstract_walk_first_passage(w.p, w.b, w.max_steps, cfg.budget(), &RngHandle::new(cfg.seed, 0))?;
    let b = f64::from(w.b);
    let mut out = ScenarioOutput::default();
    out.sample_count("replications", stats.replications as usize);
    out.sample_count("crossings", stats.m_samples.len());
    if w.p > 0.5 {
        let oracle = b / (2.0 * w.p - 1.0);
        let mean = stats.conditional.map_or(f64::NAN, |c| c.mean);
        out.checks.push(Check::new(
            "walk_mean",
            (mean - oracle).abs() <= th.walk_mean_relative * oracle,
            &[("mean", mean), ("oracle", oracle), ("relative_tolerance", th.walk_mean_relative)],
        ));
    } else {
        let oracle = (w.p / (1.0 - w.p)).powf(b);
        out.checks.push(Check::new(
            "walk_finite_fraction",
            (stats.finite_fraction - oracle).abs() <= th.walk_fraction_absolute,
            &[
                ("finite_fraction", stats.finite_fraction),
                ("oracle", oracle),
                ("absolute_tolerance", th.walk_fraction_absolute),
                ("conditional_mean", stats.conditional.map_or(f64::NAN, |c| c.mean)),
                ("conditional_mean_oracle", b / (1.0 - 2.0 * w.p)),
            ],
        ));
    }
    out.estimate("walk", &stats)?;
    Ok(out)
}

/// Maps an insufficient-data failure to its message; other errors pass through.
pub(crate) fn split_insufficient(r: Result<ScenarioOutput>) -> Result<std::result::Result<ScenarioOutput, String>> {
    match r {
        Ok(out) => Ok(Ok(out)),
        Err(e @ Error::InsufficientData { .. }) => Ok(Err(e.to_string())),
        Err(e) => Err(e),
    }
}
