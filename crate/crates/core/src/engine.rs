//! The rolling superposition mechanism.
//!
//! Each input neuron runs a clock whose residual is the forward recurrence
//! time to its next spike. A pooled event consumes the smallest residual
//! `tau`, every other residual shrinks by `tau`, and only the neuron that
//! fired renews its ISI. Under round synchronization a neuron that has fired
//! waits until the whole round has fired, then all clocks restart together
//! on the next round's shock.

use std::io::Write;

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::input::{GeneratorMode, InputGeneratorSpec, IsiSource, ShockGenerator};
use crate::rng::RngHandle;
use crate::stats::{lagged_exceedance_ratios, LagMatrix};
use crate::time::Ticks;

/// Minimum number of waiting times for the tau independence diagnostic.
pub const MIN_TAU_SAMPLES: usize = 100_000;

const MAX_REDRAWS: u64 = 100_000_000;

/// Sign of an input spike on the receiving membrane.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mark {
    Excitatory,
    Inhibitory,
}

impl Mark {
    pub fn sign(self) -> i64 {
        match self {
            Mark::Excitatory => 1,
            Mark::Inhibitory => -1,
        }
    }
}

impl Serialize for Mark {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i64(self.sign())
    }
}

/// Input neurons, their signs, and the two receiver pools.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NetworkTopology {
    n: usize,
    excitatory: Vec<bool>,
    pool_a: Vec<usize>,
    pool_b: Vec<usize>,
    jump_amplitude: f64,
}

impl NetworkTopology {
    /// `inhibitory` lists the neurons of the inhibitory set; all others excite.
    /// Pools are 0-based index sets and may overlap.
    pub fn new(n: usize, inhibitory: &[usize], pool_a: &[usize], pool_b: &[usize]) -> Result<Self> {
        if n == 0 {
            return Err(domain("network needs at least one input neuron"));
        }
        let mut excitatory = vec![true; n];
        for &i in inhibitory {
            if i >= n {
                return Err(domain(format!("inhibitory neuron {i} out of range 0..{n}")));
            }
            excitatory[i] = false;
        }
        Ok(Self {
            n,
            excitatory,
            pool_a: normalize_pool(pool_a, n, "A")?,
            pool_b: normalize_pool(pool_b, n, "B")?,
            jump_amplitude: 1.0,
        })
    }

    /// Pools `A = {1..=n_bar}` and `B = {n_under..=n}` in 1-based neuron
    /// numbering, so `|A ∩ B| = n_bar + 1 - n_under` when positive.
    pub fn interval_pools(n: usize, n_bar: usize, n_under: usize, inhibitory: &[usize]) -> Result<Self> {
        if n_bar == 0 || n_bar > n || n_under == 0 || n_under > n || n_under > n_bar + 1 {
            return Err(domain(format!(
                "interval pools need 1 <= n_bar <= n, 1 <= n_under <= min(n, n_bar + 1); got n = {n}, n_bar = {n_bar}, n_under = {n_under}"
            )));
        }
        let a: Vec<usize> = (0..n_bar).collect();
        let b: Vec<usize> = (n_under - 1..n).collect();
        Self::new(n, inhibitory, &a, &b)
    }

    /// Single pool holding every neuron.
    pub fn fully_pooled(n: usize, inhibitory: &[usize]) -> Result<Self> {
        let all: Vec<usize> = (0..n).collect();
        Self::new(n, inhibitory, &all, &all)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mark(&self, neuron: usize) -> Mark {
        if self.excitatory[neuron] {
            Mark::Excitatory
        } else {
            Mark::Inhibitory
        }
    }

    pub fn marks(&self) -> Vec<Mark> {
        (0..self.n).map(|i| self.mark(i)).collect()
    }

    pub fn excitatory_count(&self) -> usize {
        self.excitatory.iter().filter(|&&e| e).count()
    }

    pub fn pool_a(&self) -> &[usize] {
        &self.pool_a
    }

    pub fn pool_b(&self) -> &[usize] {
        &self.pool_b
    }

    pub fn overlap(&self) -> usize {
        self.pool_a.iter().filter(|i| self.pool_b.binary_search(i).is_ok()).count()
    }

    pub fn jump_amplitude(&self) -> f64 {
        self.jump_amplitude
    }

    /// Fraction of excitatory neurons in a pool: the up-jump probability of
    /// the membrane walk when every neuron fires equally often.
    pub fn excitatory_fraction(&self, pool: &[usize]) -> f64 {
        let exc = pool.iter().filter(|&&i| self.excitatory[i]).count();
        exc as f64 / pool.len() as f64
    }
}

fn normalize_pool(pool: &[usize], n: usize, name: &str) -> Result<Vec<usize>> {
    if pool.is_empty() {
        return Err(domain(format!("pool {name} must be nonempty")));
    }
    if let Some(&i) = pool.iter().find(|&&i| i >= n) {
        return Err(domain(format!("pool {name} names neuron {i}, outside 0..{n}")));
    }
    let mut p = pool.to_vec();
    p.sort_unstable();
    p.dedup();
    Ok(p)
}

/// One record of the pooled marked point process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Event {
    pub time: Ticks,
    pub source: usize,
    pub mark: Mark,
}

/// Time-ordered pooled input; simultaneous events keep neuron-index order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventStream {
    pub events: Vec<Event>,
}

impl EventStream {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Waiting times between consecutive events, the first measured from 0.
    pub fn taus(&self) -> Vec<Ticks> {
        let mut prev = Ticks::ZERO;
        self.events
            .iter()
            .map(|e| {
                let tau = e.time - prev;
                prev = e.time;
                tau
            })
            .collect()
    }

    /// Events whose source lies in `pool` (sorted indices).
    pub fn restrict(&self, pool: &[usize]) -> EventStream {
        EventStream {
            events: self
                .events
                .iter()
                .filter(|e| pool.binary_search(&e.source).is_ok())
                .copied()
                .collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = EventCsvWriter::new(out)?;
        for e in &self.events {
            w.push(e)?;
        }
        w.finish()
    }
}

/// Incremental `time,source,mark` CSV writer for long runs.
pub struct EventCsvWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> EventCsvWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(["time", "source", "mark"])?;
        Ok(Self { inner })
    }

    pub fn push(&mut self, e: &Event) -> Result<()> {
        self.inner.write_record([
            e.time.as_units().to_string(),
            e.source.to_string(),
            e.mark.sign().to_string(),
        ])?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Initial offsets `t_i`: neuron `i`'s first ISI started at time `-t_i`.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum Offsets {
    #[default]
    Zero,
    Given(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheduling {
    RoundSynchronized,
    FreeRunning,
}

impl From<GeneratorMode> for Scheduling {
    fn from(mode: GeneratorMode) -> Self {
        if mode.is_round_synchronized() {
            Scheduling::RoundSynchronized
        } else {
            Scheduling::FreeRunning
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EngineOptions {
    pub scheduling: Scheduling,
    /// Integer factor applied to every ISI and offset; times scale exactly.
    pub isi_scale: u64,
}

impl EngineOptions {
    pub fn new(scheduling: Scheduling) -> Self {
        Self {
            scheduling,
            isi_scale: 1,
        }
    }
}

/// Clock bookkeeping of the engine.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EngineState {
    pub current_time: Ticks,
    /// Absolute next spike time per neuron; `None` while waiting at the round barrier.
    pub next_event_time: Vec<Option<Ticks>>,
    /// Index `j` of the ISI each neuron is currently running.
    pub isi_index: Vec<u64>,
    pub round: u64,
    pub fired_in_round: usize,
    pub events: u64,
    pub events_per_neuron: Vec<u64>,
}

impl EngineState {
    /// Forward recurrence times `next - now`.
    pub fn residuals(&self) -> Vec<Option<Ticks>> {
        self.next_event_time
            .iter()
            .map(|t| t.map(|t| t - self.current_time))
            .collect()
    }
}

/// Outcome of one pooled event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Step {
    pub tau: Ticks,
    pub event: Event,
}

pub struct Engine<S: IsiSource> {
    source: S,
    marks: Vec<Mark>,
    options: EngineOptions,
    state: EngineState,
    first_isis: Vec<Ticks>,
    redraws: u64,
    buf: Vec<Ticks>,
}

/// Engine over the generator described by `spec`, scheduled per its mode.
pub fn init_engine(
    topology: &NetworkTopology,
    spec: &InputGeneratorSpec,
    offsets: &Offsets,
    rng: RngHandle,
) -> Result<Engine<ShockGenerator>> {
    if topology.n() != spec.n {
        return Err(domain(format!(
            "topology has {} neurons but the generator has {}",
            topology.n(),
            spec.n
        )));
    }
    let source = ShockGenerator::new(*spec, rng)?;
    Engine::new(source, topology.marks(), offsets, EngineOptions::new(spec.mode.into()))
}

impl<S: IsiSource> Engine<S> {
    pub fn new(mut source: S, marks: Vec<Mark>, offsets: &Offsets, options: EngineOptions) -> Result<Self> {
        let n = source.neurons();
        if marks.len() != n {
            return Err(domain(format!("{} marks for {n} neurons", marks.len())));
        }
        if options.isi_scale == 0 {
            return Err(domain("ISI scale factor must be positive"));
        }
        let offsets = match offsets {
            Offsets::Zero => vec![Ticks::ZERO; n],
            Offsets::Given(v) => {
                if v.len() != n {
                    return Err(domain(format!("{} offsets for {n} neurons", v.len())));
                }
                v.iter()
                    .map(|&t| {
                        if t < 0.0 {
                            return Err(domain(format!("offsets must be nonnegative, got {t}")));
                        }
                        scale(Ticks::from_units(t)?, options.isi_scale)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };

        let mut buf = vec![Ticks::ZERO; n];
        let mut attempt = 0;
        loop {
            if attempt == 0 {
                source.round(0, &mut buf)?;
            } else {
                source.redraw_first(attempt, &mut buf)?;
            }
            for t in buf.iter_mut() {
                *t = scale(*t, options.isi_scale)?;
            }
            if buf.iter().zip(&offsets).all(|(s, t)| s > t) {
                break;
            }
            attempt += 1;
            if attempt > MAX_REDRAWS {
                return Err(domain("offsets too large: first ISIs never exceeded them"));
            }
        }
        let first_isis = buf.clone();
        let next_event_time = buf.iter().zip(&offsets).map(|(&s, &t)| Some(s - t)).collect();
        Ok(Self {
            source,
            marks,
            options,
            state: EngineState {
                current_time: Ticks::ZERO,
                next_event_time,
                isi_index: vec![0; n],
                round: 0,
                fired_in_round: 0,
                events: 0,
                events_per_neuron: vec![0; n],
            },
            first_isis,
            redraws: attempt,
            buf,
        })
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    /// `T_1`: the accepted first ISIs.
    pub fn first_isis(&self) -> &[Ticks] {
        &self.first_isis
    }

    /// Number of rejected first rounds.
    pub fn redraws(&self) -> u64 {
        self.redraws
    }

    pub fn neurons(&self) -> usize {
        self.marks.len()
    }

    /// Fires the neuron with the smallest residual (lowest index on ties).
    pub fn next_event(&mut self) -> Result<Step> {
        if self.state.fired_in_round == self.marks.len() {
            self.start_round()?;
        }
        let (source, time) = self
            .state
            .next_event_time
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|t| (i, t)))
            .min_by_key(|&(i, t)| (t, i))
            .ok_or_else(|| Error::InvariantViolation("no neuron has a pending spike".into()))?;
        let tau = time - self.state.current_time;
        self.state.current_time = time;
        self.state.events += 1;
        self.state.events_per_neuron[source] += 1;

        match self.options.scheduling {
            Scheduling::FreeRunning => {
                let j = self.state.isi_index[source] + 1;
                let isi = scale(self.source.isi(source, j)?, self.options.isi_scale)?;
                self.state.isi_index[source] = j;
                self.state.next_event_time[source] = Some(add(time, isi)?);
            }
            Scheduling::RoundSynchronized => {
                self.state.next_event_time[source] = None;
                self.state.fired_in_round += 1;
            }
        }
        Ok(Step {
            tau,
            event: Event {
                time,
                source,
                mark: self.marks[source],
            },
        })
    }

    // Every clock of the finished round restarts at the current time.
    fn start_round(&mut self) -> Result<()> {
        let round = self.state.round + 1;
        let now = self.state.current_time;
        self.source.round(round, &mut self.buf)?;
        for (slot, &isi) in self.state.next_event_time.iter_mut().zip(&self.buf) {
            *slot = Some(add(now, scale(isi, self.options.isi_scale)?)?);
        }
        self.state.isi_index.iter_mut().for_each(|j| *j = round);
        self.state.round = round;
        self.state.fired_in_round = 0;
        Ok(())
    }

    /// Runs `count` events and collects them.
    pub fn stream(&mut self, count: usize) -> Result<EventStream> {
        let mut events = Vec::with_capacity(count);
        for _ in 0..count {
            events.push(self.next_event()?.event);
        }
        Ok(EventStream { events })
    }
}

fn scale(t: Ticks, factor: u64) -> Result<Ticks> {
    t.checked_mul(factor).ok_or(Error::TimeOverflow(t.as_units() * factor as f64))
}

fn add(a: Ticks, b: Ticks) -> Result<Ticks> {
    a.checked_add(b).ok_or(Error::TimeOverflow(a.as_units() + b.as_units()))
}

/// Lagged joint-exceedance ratios of the waiting-time sequence. Lags shorter
/// than the neuron count can fall inside one round of a common-shock input and
/// should be read separately.
pub fn tau_independence_diagnostic(taus: &[f64], lags: &[usize], quantiles: &[f64]) -> Result<LagMatrix> {
    lagged_exceedance_ratios(taus, lags, quantiles, MIN_TAU_SAMPLES)
}
