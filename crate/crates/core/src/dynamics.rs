//! Perfect-integrator receivers over the pooled input stream.
//!
//! The membrane `Y` starts at 0 and moves by the mark (+1 or -1) of each
//! event from the receiver's pool. When `Y` reaches the threshold `b` the
//! receiver spikes and `Y` resets to 0. There is no lower barrier.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{Event, EventStream, Mark};
use crate::error::{domain, Error, Result};
use crate::rng::RngHandle;
use crate::stats::{lagged_exceedance_ratios, LagMatrix};
use crate::time::Ticks;

/// Minimum number of output ISIs for the output independence diagnostic.
pub const MIN_OUTPUT_SAMPLES: usize = 10_000;

/// Default truncation of the abstract walk.
pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

/// A walk with `p < 1/2` sitting this far below `b` crosses with probability
/// below `HOPELESS_PROBABILITY` and is stopped early as non-crossing.
const HOPELESS_PROBABILITY: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReceiverConfig {
    pub threshold: u32,
    /// Sorted, deduplicated input neuron indices.
    pub pool: Vec<usize>,
    pub label: String,
}

impl ReceiverConfig {
    pub fn new(threshold: u32, pool: &[usize], label: impl Into<String>) -> Result<Self> {
        if threshold == 0 {
            return Err(domain("threshold b must be at least 1"));
        }
        if pool.is_empty() {
            return Err(domain("receiver pool must be nonempty"));
        }
        let mut pool = pool.to_vec();
        pool.sort_unstable();
        pool.dedup();
        Ok(Self {
            threshold,
            pool,
            label: label.into(),
        })
    }
}

/// Output of one receiver: `isis[i]` spans pooled events
/// `boundaries[i] + 1 ..= boundaries[i + 1]`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SpikeTrain {
    pub label: String,
    pub isis: Vec<Ticks>,
    /// `M_0 = 0, M_1, M_2, ...` in events of the receiver's own pool.
    pub boundaries: Vec<u64>,
    pub spike_times: Vec<Ticks>,
    /// Pool events seen in total.
    pub events: u64,
    /// The run ended with events after the last spike.
    pub silent_tail: bool,
}

impl SpikeTrain {
    pub fn len(&self) -> usize {
        self.isis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.isis.is_empty()
    }

    /// Per-spike event counts `M_i - M_{i-1}`.
    pub fn counts(&self) -> Vec<u64> {
        self.boundaries.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn isis_units(&self) -> Vec<f64> {
        self.isis.iter().map(|t| t.as_units()).collect()
    }

    /// Time window `(start, end]` of the `i`-th ISI.
    pub fn window(&self, i: usize) -> (Ticks, Ticks) {
        let start = if i == 0 { Ticks::ZERO } else { self.spike_times[i - 1] };
        (start, self.spike_times[i])
    }

    /// CSV with columns `i,z,m` (1-based `i`, `m` the cumulative count `M_i`).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "z", "m"])?;
        for (i, z) in self.isis.iter().enumerate() {
            w.write_record([(i + 1).to_string(), z.as_units().to_string(), self.boundaries[i + 1].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Incremental membrane walk; events must already be restricted to the pool.
#[derive(Clone, Debug)]
pub struct Receiver {
    threshold: i64,
    y: i64,
    train: SpikeTrain,
}

impl Receiver {
    pub fn new(cfg: &ReceiverConfig) -> Self {
        Self {
            threshold: i64::from(cfg.threshold),
            y: 0,
            train: SpikeTrain {
                label: cfg.label.clone(),
                boundaries: vec![0],
                ..SpikeTrain::default()
            },
        }
    }

    pub fn potential(&self) -> i64 {
        self.y
    }

    /// Feeds one event; returns true if the receiver spiked on it.
    pub fn push(&mut self, event: &Event) -> bool {
        self.train.events += 1;
        self.y += event.mark.sign();
        if self.y < self.threshold {
            return false;
        }
        self.y = 0;
        let last = self.train.spike_times.last().copied().unwrap_or(Ticks::ZERO);
        self.train.isis.push(event.time - last);
        self.train.spike_times.push(event.time);
        self.train.boundaries.push(self.train.events);
        true
    }

    pub fn finish(mut self) -> SpikeTrain {
        self.train.silent_tail = self.train.events > *self.train.boundaries.last().unwrap_or(&0);
        self.train
    }
}

/// Runs one receiver over the events of `stream` that belong to its pool.
/// Waiting times are those of the pool's own superposition.
pub fn run_receiver(stream: &EventStream, cfg: &ReceiverConfig) -> SpikeTrain {
    let mut r = Receiver::new(cfg);
    for e in stream.events.iter().filter(|e| cfg.pool.binary_search(&e.source).is_ok()) {
        r.push(e);
    }
    r.finish()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TwoReceiverRun {
    pub a: SpikeTrain,
    pub b: SpikeTrain,
    /// Pairs `(j, k)` whose windows `(start, end]` overlap in time.
    pub superposition_index: Vec<(usize, usize)>,
}

pub fn run_two_receivers(stream: &EventStream, cfg_a: &ReceiverConfig, cfg_b: &ReceiverConfig) -> TwoReceiverRun {
    let (a, b) = rayon::join(|| run_receiver(stream, cfg_a), || run_receiver(stream, cfg_b));
    let superposition_index = superimposed_pairs(&a, &b);
    TwoReceiverRun {
        a,
        b,
        superposition_index,
    }
}

/// All `(j, k)` with overlapping half-open windows, by a sweep over both trains.
pub fn superimposed_pairs(a: &SpikeTrain, b: &SpikeTrain) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    let (mut j, mut k) = (0, 0);
    while j < a.len() && k < b.len() {
        let (a0, a1) = a.window(j);
        let (b0, b1) = b.window(k);
        if a0 < b1 && b0 < a1 {
            pairs.push((j, k));
        }
        if a1 <= b1 {
            j += 1;
        } else {
            k += 1;
        }
    }
    pairs
}

/// Lagged joint-exceedance ratios of an output ISI sequence.
pub fn output_independence_diagnostic(train: &SpikeTrain, lags: &[usize], quantiles: &[f64]) -> Result<LagMatrix> {
    lagged_exceedance_ratios(&train.isis_units(), lags, quantiles, MIN_OUTPUT_SAMPLES)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PassageSummary {
    pub mean: f64,
    pub std_dev: f64,
    pub min: u64,
    pub max: u64,
}

/// First-passage statistics of the abstract `+-1` walk.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WalkStats {
    pub p: f64,
    pub b: u32,
    pub max_steps: u64,
    pub replications: u64,
    /// Fraction of positive jumps over all simulated steps.
    pub p_hat: f64,
    /// Passage counts of the replications that crossed, in replication order.
    #[serde(skip)]
    pub m_samples: Vec<u64>,
    pub finite_fraction: f64,
    /// Replications stopped at `max_steps` without crossing.
    pub truncated: u64,
    /// Summary of `M` conditional on crossing; absent if nothing crossed.
    pub conditional: Option<PassageSummary>,
}

struct WalkOutcome {
    passage: Option<u64>,
    ups: u64,
    steps: u64,
    truncated: bool,
}

/// Simulates `replications` walks from 0 with up-probability `p` until they
/// first reach `b`, giving up after `max_steps`. Replication `r` reads its
/// jumps from draw `r * 2^32` of `rng`'s stream.
pub fn abstract_walk_first_passage(
    p: f64,
    b: u32,
    max_steps: u64,
    replications: u64,
    rng: &RngHandle,
) -> Result<WalkStats> {
    if !(0.0..=1.0).contains(&p) {
        return Err(domain(format!("jump probability p must lie in [0, 1], got {p}")));
    }
    if p == 0.5 {
        return Err(Error::ModelExcluded);
    }
    if b == 0 {
        return Err(domain("threshold b must be at least 1"));
    }
    if max_steps == 0 || max_steps > 1 << 32 {
        return Err(domain(format!("max_steps must lie in 1..=2^32, got {max_steps}")));
    }
    if replications == 0 {
        return Err(domain("at least one replication is required"));
    }
    // lowest level from which a crossing is still plausible
    let floor = if p < 0.5 {
        let depth = (HOPELESS_PROBABILITY.ln() / (p / (1.0 - p)).ln()).ceil();
        i64::from(b) - if depth.is_finite() { depth as i64 } else { 0 }
    } else {
        i64::MIN
    };
    // up-jump iff the top 53 bits fall below p * 2^53
    let cut = (p * (1u64 << 53) as f64) as u64;
    let outcomes: Vec<WalkOutcome> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut h = rng.clone();
            h.seek(r << 32);
            walk_once(&mut h, cut, i64::from(b), floor, max_steps)
        })
        .collect();

    let (mut ups, mut steps, mut truncated) = (0u64, 0u64, 0u64);
    let mut m_samples = Vec::new();
    for o in &outcomes {
        ups += o.ups;
        steps += o.steps;
        truncated += u64::from(o.truncated);
        m_samples.extend(o.passage);
    }
    let conditional = summarize(&m_samples);
    Ok(WalkStats {
        p,
        b,
        max_steps,
        replications,
        p_hat: if steps == 0 { 0.0 } else { ups as f64 / steps as f64 },
        finite_fraction: m_samples.len() as f64 / replications as f64,
        m_samples,
        truncated,
        conditional,
    })
}

fn walk_once(rng: &mut RngHandle, cut: u64, b: i64, floor: i64, max_steps: u64) -> WalkOutcome {
    let (mut y, mut ups) = (0i64, 0u64);
    for step in 1..=max_steps {
        if rng.next_u64() >> 11 < cut {
            y += 1;
            ups += 1;
        } else {
            y -= 1;
        }
        if y == b {
            return WalkOutcome {
                passage: Some(step),
                ups,
                steps: step,
                truncated: false,
            };
        }
        if y < floor {
            return WalkOutcome {
                passage: None,
                ups,
                steps: step,
                truncated: false,
            };
        }
    }
    WalkOutcome {
        passage: None,
        ups,
        steps: max_steps,
        truncated: true,
    }
}

fn summarize(m: &[u64]) -> Option<PassageSummary> {
    if m.is_empty() {
        return None;
    }
    let n = m.len() as f64;
    let mean = m.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = m.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Some(PassageSummary {
        mean,
        std_dev: var.sqrt(),
        min: *m.iter().min()?,
        max: *m.iter().max()?,
    })
}

/// Up-jump probability of a pool whose neurons fire equally often.
pub fn pool_up_probability(marks: &[Mark], pool: &[usize]) -> f64 {
    let ups = pool.iter().filter(|&&i| marks[i] == Mark::Excitatory).count();
    ups as f64 / pool.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{init_engine, Engine, EngineOptions, NetworkTopology, Offsets, Scheduling};
    use crate::input::{Coupling, GeneratorMode, InputGeneratorSpec, ShockGenerator};
    use crate::rv::{sample_pareto, MultiplierBounds, TailModel};
    use crate::stats::{default_k, hill_estimate};

    fn stream(marks: &[i8]) -> EventStream {
        EventStream {
            events: marks
                .iter()
                .enumerate()
                .map(|(k, &m)| Event {
                    time: Ticks::from_units((k + 1) as f64).unwrap(),
                    source: if m > 0 { 0 } else { 1 },
                    mark: if m > 0 { Mark::Excitatory } else { Mark::Inhibitory },
                })
                .collect(),
        }
    }

    fn units(ts: &[Ticks]) -> Vec<f64> {
        ts.iter().map(|t| t.as_units()).collect()
    }

    #[test]
    fn deterministic_walks() {
        let cfg = ReceiverConfig::new(3, &[0, 1], "a").unwrap();
        let t = run_receiver(&stream(&[1, 1, 1, 1, 1]), &cfg);
        assert_eq!(units(&t.isis), vec![3.0]);
        assert_eq!(t.boundaries, vec![0, 3]);
        assert!(t.silent_tail);

        let cfg = ReceiverConfig::new(2, &[0, 1], "a").unwrap();
        let t = run_receiver(&stream(&[1, -1, 1, 1, 1]), &cfg);
        assert_eq!(units(&t.isis), vec![4.0]);
        assert_eq!(t.boundaries, vec![0, 4]);

        let t = run_receiver(&EventStream::default(), &cfg);
        assert!(t.is_empty() && !t.silent_tail);
    }

    #[test]
    fn potential_is_unbounded_below() {
        let cfg = ReceiverConfig::new(1, &[0, 1], "a").unwrap();
        let s = stream(&[-1, -1, -1, 1, 1, 1, 1]);
        let mut r = Receiver::new(&cfg);
        let path: Vec<i64> = s.events.iter().map(|e| {
            r.push(e);
            r.potential()
        }).collect();
        assert_eq!(path, vec![-1, -2, -3, -2, -1, 0, 0]);
        assert_eq!(r.finish().boundaries, vec![0, 7]);
    }

    #[test]
    fn receiver_filters_its_pool() {
        let s = stream(&[1, -1, 1, -1, 1]);
        let only_exc = ReceiverConfig::new(2, &[0], "a").unwrap();
        let t = run_receiver(&s, &only_exc);
        // pool-local events are times 1, 3, 5
        assert_eq!(units(&t.isis), vec![3.0]);
        assert_eq!(t.boundaries, vec![0, 2]);
        assert!(t.silent_tail);
    }

    #[test]
    fn config_validation() {
        assert!(ReceiverConfig::new(0, &[0], "a").is_err());
        assert!(ReceiverConfig::new(1, &[], "a").is_err());
        assert_eq!(ReceiverConfig::new(1, &[3, 1, 3], "a").unwrap().pool, vec![1, 3]);
    }

    fn engine_stream(n: usize, inhibitory: &[usize], coupling: Coupling, scale: u64, events: usize, seed: u64) -> EventStream {
        let spec = InputGeneratorSpec::new(
            n,
            TailModel::new(0.6, 1.0).unwrap(),
            MultiplierBounds::new(0.5, 2.0).unwrap(),
            GeneratorMode::RoundSynchronizedCommonShock,
            coupling,
        )
        .unwrap();
        let topo = NetworkTopology::fully_pooled(n, inhibitory).unwrap();
        let source = ShockGenerator::new(spec, RngHandle::new(seed, 0)).unwrap();
        let mut options = EngineOptions::new(Scheduling::RoundSynchronized);
        options.isi_scale = scale;
        let mut e = Engine::new(source, topo.marks(), &Offsets::Zero, options).unwrap();
        e.stream(events).unwrap()
    }

    #[test]
    fn two_receivers_on_identical_pools_agree() {
        let s = engine_stream(4, &[3], Coupling::Multiplicative, 1, 5_000, 2);
        let a = ReceiverConfig::new(3, &[0, 1, 2, 3], "a").unwrap();
        let b = ReceiverConfig::new(3, &[0, 1, 2, 3], "b").unwrap();
        let run = run_two_receivers(&s, &a, &b);
        assert_eq!(run.a.isis, run.b.isis);
        assert!(!run.a.is_empty());
        let diag: Vec<(usize, usize)> = (0..run.a.len()).map(|i| (i, i)).collect();
        assert_eq!(run.superposition_index, diag);
    }

    #[test]
    fn superposition_matches_quadratic_scan() {
        let s = engine_stream(6, &[1, 4], Coupling::Multiplicative, 1, 3_000, 9);
        let a = ReceiverConfig::new(2, &[0, 1, 2, 3], "a").unwrap();
        let b = ReceiverConfig::new(3, &[2, 3, 4, 5], "b").unwrap();
        let run = run_two_receivers(&s, &a, &b);
        let mut brute = Vec::new();
        for j in 0..run.a.len() {
            for k in 0..run.b.len() {
                let (a0, a1) = run.a.window(j);
                let (b0, b1) = run.b.window(k);
                if a0 < b1 && b0 < a1 {
                    brute.push((j, k));
                }
            }
        }
        assert!(!brute.is_empty());
        assert_eq!(run.superposition_index, brute);
    }

    #[test]
    fn homogeneity_scales_isis_exactly() {
        let s1 = engine_stream(10, &[8, 9], Coupling::Additive, 1, 20_000, 4);
        let s3 = engine_stream(10, &[8, 9], Coupling::Additive, 3, 20_000, 4);
        let cfg = ReceiverConfig::new(5, &(0..10).collect::<Vec<_>>(), "a").unwrap();
        let t1 = run_receiver(&s1, &cfg);
        let t3 = run_receiver(&s3, &cfg);
        assert!(t1.len() > 100);
        assert_eq!(t1.boundaries, t3.boundaries);
        for (z1, z3) in t1.isis.iter().zip(&t3.isis) {
            assert_eq!(z1.checked_mul(3).unwrap(), *z3);
        }
    }

    #[test]
    fn isis_reconstruct_from_taus() {
        let s = engine_stream(5, &[0, 3], Coupling::Multiplicative, 1, 10_000, 6);
        let cfg = ReceiverConfig::new(4, &[0, 1, 2, 3, 4], "a").unwrap();
        let t = run_receiver(&s, &cfg);
        let taus = s.taus();
        let marks: Vec<i64> = s.events.iter().map(|e| e.mark.sign()).collect();
        for (i, w) in t.boundaries.windows(2).enumerate() {
            let (lo, hi) = (w[0] as usize, w[1] as usize);
            assert_eq!(taus[lo..hi].iter().copied().sum::<Ticks>(), t.isis[i]);
            // first passage: the running sum touches b only at the last event
            let mut y = 0;
            for (k, m) in marks[lo..hi].iter().enumerate() {
                y += m;
                assert_eq!(y == 4, k == hi - lo - 1);
            }
            assert_eq!(s.events[hi - 1].mark, Mark::Excitatory);
        }
    }

    #[test]
    fn all_excitatory_counts_equal_b() {
        let s = engine_stream(3, &[], Coupling::Multiplicative, 1, 1_000, 1);
        let t = run_receiver(&s, &ReceiverConfig::new(4, &[0, 1, 2], "a").unwrap());
        assert_eq!(t.len(), 250);
        assert!(t.counts().iter().all(|&c| c == 4));
        assert!(!t.silent_tail);
    }

    #[test]
    fn output_isis_keep_alpha() {
        let spec = InputGeneratorSpec::new(
            10,
            TailModel::new(0.6, 1.0).unwrap(),
            MultiplierBounds::new(0.5, 2.0).unwrap(),
            GeneratorMode::RoundSynchronizedCommonShock,
            Coupling::Additive,
        )
        .unwrap();
        let topo = NetworkTopology::fully_pooled(10, &[8, 9]).unwrap();
        let mut e = init_engine(&topo, &spec, &Offsets::Zero, RngHandle::new(11, 0)).unwrap();
        let cfg = ReceiverConfig::new(5, topo.pool_a(), "a").unwrap();
        let mut r = Receiver::new(&cfg);
        let mut spikes = 0;
        while spikes < 100_000 {
            let step = e.next_event().unwrap();
            spikes += usize::from(r.push(&step.event));
        }
        let z = r.finish().isis_units();
        let est = hill_estimate(&z, default_k(z.len())).unwrap();
        assert!((est.alpha_hat - 0.6).abs() <= 0.1, "{est:?}");
    }

    #[test]
    fn output_diagnostic_floor_and_ceiling() {
        let m = TailModel::new(0.6, 1.0).unwrap();
        let mut rng = RngHandle::new(3, 0);
        let iid: Vec<Ticks> = (0..100_000).map(|_| Ticks::from_units(sample_pareto(&m, &mut rng)).unwrap()).collect();
        let train = SpikeTrain {
            isis: iid.clone(),
            ..SpikeTrain::default()
        };
        let d = output_independence_diagnostic(&train, &[1, 2], &[0.999]).unwrap();
        assert!(d.ratio(1, 0.999).unwrap() < 0.005);

        let doubled: Vec<Ticks> = iid[..20_000].iter().flat_map(|&z| [z, z]).collect();
        let train = SpikeTrain {
            isis: doubled,
            ..SpikeTrain::default()
        };
        // pairs (Z_{2h}, Z_{2h+1}) coincide, so half of all lag-1 positions are duplicates
        let d = output_independence_diagnostic(&train, &[1], &[0.999]).unwrap();
        assert!((d.ratio(1, 0.999).unwrap() - 0.5).abs() < 0.02);
        let short = SpikeTrain {
            isis: iid[..100].to_vec(),
            ..SpikeTrain::default()
        };
        assert!(matches!(
            output_independence_diagnostic(&short, &[1], &[0.999]),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn walk_rejects_symmetric_case() {
        let rng = RngHandle::new(0, 0);
        assert!(matches!(abstract_walk_first_passage(0.5, 3, 10, 10, &rng), Err(Error::ModelExcluded)));
        assert!(abstract_walk_first_passage(1.5, 3, 10, 10, &rng).is_err());
        assert!(abstract_walk_first_passage(0.7, 0, 10, 10, &rng).is_err());
    }

    #[test]
    fn monotone_walk() {
        let s = abstract_walk_first_passage(1.0, 4, 100, 50, &RngHandle::new(1, 0)).unwrap();
        assert!(s.m_samples.iter().all(|&m| m == 4));
        assert_eq!(s.p_hat, 1.0);
        assert_eq!(s.finite_fraction, 1.0);
        let s = abstract_walk_first_passage(0.0, 4, 100, 50, &RngHandle::new(1, 0)).unwrap();
        assert_eq!(s.finite_fraction, 0.0);
        assert!(s.conditional.is_none());
    }

    #[test]
    fn biased_walk_mean_matches_gamblers_ruin() {
        let s = abstract_walk_first_passage(0.7, 10, DEFAULT_MAX_STEPS, 100_000, &RngHandle::new(5, 0)).unwrap();
        let mean = s.conditional.unwrap().mean;
        assert!((mean - 25.0).abs() < 0.5, "{mean}");
        assert!((s.p_hat - 0.7).abs() < 0.005);
        assert_eq!(s.finite_fraction, 1.0);
    }

    #[test]
    fn defective_walk_hits_with_ruin_probability() {
        let s = abstract_walk_first_passage(0.4, 3, 100_000, 200_000, &RngHandle::new(8, 0)).unwrap();
        let target = (2.0f64 / 3.0).powi(3);
        assert!((s.finite_fraction - target).abs() < 0.005, "{}", s.finite_fraction);
        // crossing walks have mean b / (1 - 2p) under the conditioned (dual) drift
        let mean = s.conditional.unwrap().mean;
        assert!((mean - 15.0).abs() < 0.5, "{mean}");
        assert_eq!(s.truncated, 0);
    }

    #[test]
    fn walk_is_reproducible() {
        let a = abstract_walk_first_passage(0.6, 5, 1000, 500, &RngHandle::new(2, 3)).unwrap();
        let b = abstract_walk_first_passage(0.6, 5, 1000, 500, &RngHandle::new(2, 3)).unwrap();
        assert_eq!(a, b);
    }
}
