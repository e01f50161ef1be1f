//! Input ISI generators.
//!
//! All generators share one layout: round `j` owns draws
//! `j * (n + 1) .. (j + 1) * (n + 1)` of the stream. Draw 0 of a round is the
//! common shock `W_j`, draw `1 + i` belongs to neuron `i`. Any ISI can thus be
//! recomputed in isolation, and a chunk, an engine and a reference simulator
//! fed from the same handle see identical values.

mod audit;
mod chunk;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::rng::RngHandle;
use crate::rv::{quantile_unchecked, MultiplierBounds, TailModel};
use crate::time::Ticks;

pub use audit::{validate_hypotheses, AuditThresholds, HypothesisCheck, HypothesisReport};
pub use chunk::{generate_isi_chunk, IsiMatrixChunk};

/// How the ISIs of different neurons relate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorMode {
    /// Shared shock per round; neurons wait at a barrier until the round ends.
    RoundSynchronizedCommonShock,
    /// Shared shock per ISI index; neurons free-run.
    AsynchronousCommonShock,
    /// I.i.d. Pareto ISIs, independent across neurons. Violates full dependence.
    IndependentBaseline,
}

impl GeneratorMode {
    pub fn has_shock(self) -> bool {
        !matches!(self, GeneratorMode::IndependentBaseline)
    }

    pub fn is_round_synchronized(self) -> bool {
        matches!(self, GeneratorMode::RoundSynchronizedCommonShock)
    }
}

/// How the common shock `W` and the bounded factor `U` combine into an ISI.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// `S = U * W`.
    #[default]
    Multiplicative,
    /// `S = W + U`: the within-round spread stays bounded while `W` carries
    /// the whole tail.
    Additive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputGeneratorSpec {
    pub n: usize,
    pub tail: TailModel,
    pub multipliers: MultiplierBounds,
    pub mode: GeneratorMode,
    #[serde(default)]
    pub coupling: Coupling,
}

impl InputGeneratorSpec {
    pub fn new(
        n: usize,
        tail: TailModel,
        multipliers: MultiplierBounds,
        mode: GeneratorMode,
        coupling: Coupling,
    ) -> Result<Self> {
        let spec = Self {
            n,
            tail,
            multipliers,
            mode,
            coupling,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(domain("neuron count must be at least 1"));
        }
        TailModel::new(self.tail.alpha(), self.tail.scale())?;
        MultiplierBounds::new(self.multipliers.lo, self.multipliers.hi)?;
        Ok(())
    }

    /// Closed interval that every entry of a common-shock round with shock `w` lies in.
    pub fn entry_bounds(&self, w: f64) -> (f64, f64) {
        let (lo, hi) = (self.multipliers.lo, self.multipliers.hi);
        match self.coupling {
            Coupling::Multiplicative => (lo * w, hi * w),
            Coupling::Additive => (w + lo, w + hi),
        }
    }

    fn stride(&self) -> u64 {
        self.n as u64 + 1
    }
}

/// Round index space reserved for rejection redraws of the first round.
const REDRAW_BASE: u64 = 1 << 40;

/// Supplies ISIs to the point-process engine.
pub trait IsiSource {
    fn neurons(&self) -> usize;

    /// All `n` ISIs of round `round`.
    fn round(&mut self, round: u64, out: &mut [Ticks]) -> Result<()>;

    /// ISI of one neuron in round `round`; must agree with [`IsiSource::round`].
    fn isi(&mut self, neuron: usize, round: u64) -> Result<Ticks>;

    /// Fresh draw of the first round, used when conditioning on initial offsets.
    /// `attempt` starts at 1 (attempt 0 is round 0 itself).
    fn redraw_first(&mut self, attempt: u64, out: &mut [Ticks]) -> Result<()> {
        let _ = (attempt, out);
        Err(domain("this ISI source cannot redraw its first round"))
    }
}

/// Position-addressed generator of the three input modes.
#[derive(Clone, Debug)]
pub struct ShockGenerator {
    spec: InputGeneratorSpec,
    rng: RngHandle,
    draws: Vec<f64>,
}

impl ShockGenerator {
    pub fn new(spec: InputGeneratorSpec, rng: RngHandle) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            draws: vec![0.0; spec.n + 1],
            spec,
            rng,
        })
    }

    pub fn spec(&self) -> &InputGeneratorSpec {
        &self.spec
    }

    fn load_round(&mut self, round: u64) {
        let base = round * self.spec.stride();
        self.rng.uniforms_at(base, &mut self.draws);
    }

    fn shock_of(&self, u: f64) -> f64 {
        quantile_unchecked(&self.spec.tail, u)
    }

    /// Real-valued ISIs of round `round` and its shock (absent for the baseline).
    pub fn round_values(&mut self, round: u64, out: &mut [f64]) -> Option<f64> {
        self.load_round(round);
        let spec = self.spec;
        if spec.mode.has_shock() {
            let w = self.shock_of(self.draws[0]);
            for (slot, &u) in out.iter_mut().zip(&self.draws[1..]) {
                let m = spec.multipliers.at(u);
                *slot = match spec.coupling {
                    Coupling::Multiplicative => m * w,
                    Coupling::Additive => w + m,
                };
            }
            Some(w)
        } else {
            for (slot, &u) in out.iter_mut().zip(&self.draws[1..]) {
                *slot = quantile_unchecked(&spec.tail, u);
            }
            None
        }
    }

    fn ticks_from(&self, shock_u: f64, own_u: f64) -> Result<Ticks> {
        let spec = &self.spec;
        if !spec.mode.has_shock() {
            return Ticks::from_units(quantile_unchecked(&spec.tail, own_u));
        }
        let w = self.shock_of(shock_u);
        let m = spec.multipliers.at(own_u);
        match spec.coupling {
            Coupling::Multiplicative => Ticks::from_units(m * w),
            Coupling::Additive => {
                // summed on the clock so the jitter survives a huge shock
                let t = Ticks::from_units(w)?
                    .checked_add(Ticks::from_units(m)?)
                    .ok_or(crate::error::Error::TimeOverflow(w))?;
                Ok(t)
            }
        }
    }

    fn fill_ticks(&self, out: &mut [Ticks]) -> Result<()> {
        let shock_u = self.draws[0];
        for (slot, &u) in out.iter_mut().zip(&self.draws[1..]) {
            *slot = self.ticks_from(shock_u, u)?;
        }
        Ok(())
    }
}

impl IsiSource for ShockGenerator {
    fn neurons(&self) -> usize {
        self.spec.n
    }

    fn round(&mut self, round: u64, out: &mut [Ticks]) -> Result<()> {
        self.load_round(round);
        self.fill_ticks(out)
    }

    fn isi(&mut self, neuron: usize, round: u64) -> Result<Ticks> {
        let base = round * self.spec.stride();
        let mut shock = [0.0];
        let mut own = [0.0];
        if self.spec.mode.has_shock() {
            self.rng.uniforms_at(base, &mut shock);
        }
        self.rng.uniforms_at(base + 1 + neuron as u64, &mut own);
        self.ticks_from(shock[0], own[0])
    }

    fn redraw_first(&mut self, attempt: u64, out: &mut [Ticks]) -> Result<()> {
        self.round(REDRAW_BASE + attempt, out)
    }
}

/// Explicit ISI table, `rows[j][i]` = ISI of neuron `i` in round `j`.
#[derive(Clone, Debug)]
pub struct IsiTable {
    rows: Vec<Vec<Ticks>>,
}

impl IsiTable {
    pub fn new(rows: Vec<Vec<Ticks>>) -> Result<Self> {
        let n = rows.first().map(Vec::len).unwrap_or(0);
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(domain("ISI table must be a nonempty rectangular matrix"));
        }
        if rows.iter().flatten().any(|t| t.is_zero()) {
            return Err(domain("ISI table entries must be positive"));
        }
        Ok(Self { rows })
    }

    /// Table from real-valued ISIs given in time units.
    pub fn from_units(rows: &[Vec<f64>]) -> Result<Self> {
        let rows = rows
            .iter()
            .map(|r| r.iter().map(|&x| Ticks::from_units(x)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }

    fn row(&self, round: u64) -> Result<&Vec<Ticks>> {
        self.rows
            .get(round as usize)
            .ok_or_else(|| domain(format!("ISI table has no round {round}")))
    }
}

impl IsiSource for IsiTable {
    fn neurons(&self) -> usize {
        self.rows[0].len()
    }

    fn round(&mut self, round: u64, out: &mut [Ticks]) -> Result<()> {
        out.copy_from_slice(self.row(round)?);
        Ok(())
    }

    fn isi(&mut self, neuron: usize, round: u64) -> Result<Ticks> {
        Ok(self.row(round)?[neuron])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn spec(n: usize, mode: GeneratorMode, coupling: Coupling) -> InputGeneratorSpec {
        InputGeneratorSpec::new(
            n,
            TailModel::new(0.6, 1.0).unwrap(),
            MultiplierBounds::new(0.5, 2.0).unwrap(),
            mode,
            coupling,
        )
        .unwrap()
    }

    #[test]
    fn point_queries_match_rounds() {
        for mode in [
            GeneratorMode::RoundSynchronizedCommonShock,
            GeneratorMode::AsynchronousCommonShock,
            GeneratorMode::IndependentBaseline,
        ] {
            for coupling in [Coupling::Multiplicative, Coupling::Additive] {
                let mut g = ShockGenerator::new(spec(4, mode, coupling), RngHandle::new(3, 1)).unwrap();
                let mut row = vec![Ticks::ZERO; 4];
                for j in [0u64, 1, 7, 1000] {
                    g.round(j, &mut row).unwrap();
                    for (i, &t) in row.iter().enumerate() {
                        assert_eq!(g.isi(i, j).unwrap(), t);
                    }
                }
            }
        }
    }

    #[test]
    fn additive_keeps_jitter_under_huge_shock() {
        let s = spec(3, GeneratorMode::RoundSynchronizedCommonShock, Coupling::Additive);
        let g = ShockGenerator::new(s, RngHandle::new(0, 0)).unwrap();
        // shock uniform close to 1 gives W ~ 1e25
        let a = g.ticks_from(1.0 - 1e-15, 0.0).unwrap();
        let b = g.ticks_from(1.0 - 1e-15, 1.0).unwrap();
        assert_eq!((b - a).as_units(), 1.5);
    }

    #[test]
    fn zero_neurons_rejected() {
        let r = InputGeneratorSpec::new(
            0,
            TailModel::new(0.6, 1.0).unwrap(),
            MultiplierBounds::new(0.5, 2.0).unwrap(),
            GeneratorMode::IndependentBaseline,
            Coupling::Multiplicative,
        );
        assert!(r.is_err());
    }

    #[test]
    fn table_source() {
        let mut t = IsiTable::from_units(&[vec![3.0, 1.2, 5.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(t.neurons(), 3);
        assert_eq!(t.isi(1, 0).unwrap(), Ticks::from_units(1.2).unwrap());
        assert!(t.isi(0, 2).is_err());
        assert!(t.redraw_first(1, &mut [Ticks::ZERO; 3]).is_err());
        assert!(IsiTable::from_units(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(IsiTable::from_units(&[vec![0.0]]).is_err());
    }
}
