use std::io::Write;

use rayon::prelude::*;

use super::{InputGeneratorSpec, ShockGenerator};
use crate::error::{domain, Error, Result};
use crate::rng::RngHandle;

const BLOCK_ROUNDS: usize = 1 << 15;

/// `n x rounds` matrix of ISIs `S_j^i`, stored round-major.
#[derive(Clone, Debug, PartialEq)]
pub struct IsiMatrixChunk {
    n: usize,
    rounds: usize,
    entries: Vec<f64>,
    shocks: Vec<f64>,
}

impl IsiMatrixChunk {
    /// Builds a chunk from raw parts; `shocks` is empty for the independent baseline.
    pub fn from_parts(n: usize, entries: Vec<f64>, shocks: Vec<f64>) -> Result<Self> {
        if n == 0 || !entries.len().is_multiple_of(n) {
            return Err(domain("entries must fill whole rounds of n neurons"));
        }
        let rounds = entries.len() / n;
        if !shocks.is_empty() && shocks.len() != rounds {
            return Err(domain("one shock per round expected"));
        }
        Ok(Self {
            n,
            rounds,
            entries,
            shocks,
        })
    }

    pub fn neurons(&self) -> usize {
        self.n
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn get(&self, neuron: usize, round: usize) -> f64 {
        self.entries[round * self.n + neuron]
    }

    pub fn set(&mut self, neuron: usize, round: usize, value: f64) {
        self.entries[round * self.n + neuron] = value;
    }

    pub fn column(&self, round: usize) -> &[f64] {
        &self.entries[round * self.n..(round + 1) * self.n]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks_exact(self.n)
    }

    /// ISIs of one neuron across rounds.
    pub fn row(&self, neuron: usize) -> Vec<f64> {
        self.entries.iter().skip(neuron).step_by(self.n).copied().collect()
    }

    pub fn shocks(&self) -> &[f64] {
        &self.shocks
    }

    /// Errors on the first entry that is not a positive finite number.
    pub fn check_positive(&self) -> Result<()> {
        match self.entries.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
            None => Ok(()),
            Some(k) => Err(Error::InvariantViolation(format!(
                "ISI of neuron {} in round {} is {}, expected a positive real",
                k % self.n,
                k / self.n,
                self.entries[k]
            ))),
        }
    }

    /// CSV with columns `round,neuron,isi,shock`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["round", "neuron", "isi", "shock"])?;
        for j in 0..self.rounds {
            let shock = self.shocks.get(j).map(f64::to_string).unwrap_or_default();
            for i in 0..self.n {
                w.write_record([
                    j.to_string(),
                    i.to_string(),
                    self.get(i, j).to_string(),
                    shock.clone(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws `rounds` rounds of ISIs for every neuron.
///
/// Blocks of rounds are filled in parallel; the result does not depend on the
/// thread count because every round is addressed by position in the stream.
pub fn generate_isi_chunk(
    spec: &InputGeneratorSpec,
    rounds: usize,
    rng: &RngHandle,
) -> Result<IsiMatrixChunk> {
    if rounds == 0 {
        return Err(domain("a chunk needs at least one round"));
    }
    let base = ShockGenerator::new(*spec, rng.clone())?;
    let n = spec.n;
    let mut entries = vec![0.0; rounds * n];
    let mut shocks = if spec.mode.has_shock() {
        vec![0.0; rounds]
    } else {
        Vec::new()
    };

    let fill = |block: usize, cols: &mut [f64], shock_slots: Option<&mut [f64]>| {
        let mut g = base.clone();
        let first = block * BLOCK_ROUNDS;
        let mut shock_slots = shock_slots;
        for (k, col) in cols.chunks_exact_mut(n).enumerate() {
            let w = g.round_values((first + k) as u64, col);
            if let (Some(slots), Some(w)) = (shock_slots.as_deref_mut(), w) {
                slots[k] = w;
            }
        }
    };

    if shocks.is_empty() {
        entries
            .par_chunks_mut(BLOCK_ROUNDS * n)
            .enumerate()
            .for_each(|(b, cols)| fill(b, cols, None));
    } else {
        entries
            .par_chunks_mut(BLOCK_ROUNDS * n)
            .zip(shocks.par_chunks_mut(BLOCK_ROUNDS))
            .enumerate()
            .for_each(|(b, (cols, s))| fill(b, cols, Some(s)));
    }
    IsiMatrixChunk::from_parts(n, entries, shocks)
}

#[cfg(test)]
mod tests {
    use super::super::{Coupling, GeneratorMode, IsiSource};
    use super::*;
    use crate::rv::{MultiplierBounds, TailModel};
    use crate::stats::hill_estimate;
    use crate::time::Ticks;

    fn spec(n: usize, lo: f64, hi: f64, mode: GeneratorMode, coupling: Coupling) -> InputGeneratorSpec {
        InputGeneratorSpec::new(
            n,
            TailModel::new(0.6, 1.0).unwrap(),
            MultiplierBounds::new(lo, hi).unwrap(),
            mode,
            coupling,
        )
        .unwrap()
    }

    #[test]
    fn degenerate_multipliers_repeat_shock() {
        let s = spec(3, 1.0, 1.0, GeneratorMode::RoundSynchronizedCommonShock, Coupling::Multiplicative);
        let c = generate_isi_chunk(&s, 1, &RngHandle::new(1, 0)).unwrap();
        let w = c.shocks()[0];
        assert_eq!(c.column(0), &[w, w, w]);
    }

    #[test]
    fn zero_rounds_rejected() {
        let s = spec(3, 0.5, 2.0, GeneratorMode::IndependentBaseline, Coupling::Multiplicative);
        assert!(generate_isi_chunk(&s, 0, &RngHandle::new(1, 0)).is_err());
    }

    #[test]
    fn entries_within_shock_bounds_and_ratio_bound() {
        for coupling in [Coupling::Multiplicative, Coupling::Additive] {
            let s = spec(4, 0.5, 2.0, GeneratorMode::RoundSynchronizedCommonShock, coupling);
            let c = generate_isi_chunk(&s, 70_000, &RngHandle::new(8, 2)).unwrap();
            c.check_positive().unwrap();
            for (j, col) in c.columns().enumerate() {
                let (lo, hi) = s.entry_bounds(c.shocks()[j]);
                for &x in col {
                    assert!(x >= lo * (1.0 - 1e-12) && x <= hi * (1.0 + 1e-12));
                }
                let max = col.iter().cloned().fold(f64::MIN, f64::max);
                let min = col.iter().cloned().fold(f64::MAX, f64::min);
                assert!(max / min <= 4.0 * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn chunk_matches_engine_source() {
        let s = spec(3, 0.5, 2.0, GeneratorMode::RoundSynchronizedCommonShock, Coupling::Multiplicative);
        let rng = RngHandle::new(21, 4);
        // crosses a parallel block boundary
        let c = generate_isi_chunk(&s, BLOCK_ROUNDS + 10, &rng).unwrap();
        let mut g = ShockGenerator::new(s, rng).unwrap();
        for j in [0, 5, BLOCK_ROUNDS - 1, BLOCK_ROUNDS, BLOCK_ROUNDS + 9] {
            for i in 0..3 {
                let t = g.isi(i, j as u64).unwrap();
                assert_eq!(t, Ticks::from_units(c.get(i, j)).unwrap());
            }
        }
    }

    #[test]
    fn marginal_tail_and_joint_exceedance() {
        let s = spec(2, 0.5, 2.0, GeneratorMode::RoundSynchronizedCommonShock, Coupling::Multiplicative);
        let c = generate_isi_chunk(&s, 100_000, &RngHandle::new(77, 0)).unwrap();
        let row = c.row(0);
        let k = (row.len() as f64).powf(0.6).ceil() as usize;
        let est = hill_estimate(&row, k).unwrap();
        assert!((est.alpha_hat - 0.6).abs() < 0.05, "{}", est.alpha_hat);

        // P(S1 > z, S2 > z) / P(W > z) against E[min(U1, U2)^alpha] by brute force
        let mut shocks = c.shocks().to_vec();
        shocks.sort_by(f64::total_cmp);
        let z = shocks[(0.999 * shocks.len() as f64) as usize];
        let joint = c.columns().filter(|col| col[0] > z && col[1] > z).count() as f64;
        let ref_count = c.shocks().iter().filter(|&&w| w > z).count() as f64;
        let ratio = joint / ref_count;

        let mut rng = RngHandle::new(5, 5);
        let m = 1_000_000;
        let oracle = (0..m)
            .map(|_| {
                let a = 0.5 + 1.5 * rng.uniform();
                let b = 0.5 + 1.5 * rng.uniform();
                a.min(b).powf(0.6)
            })
            .sum::<f64>()
            / m as f64;
        assert!(ratio > 0.0);
        assert!((ratio - oracle).abs() < 0.25, "ratio {ratio} oracle {oracle}");
    }

    #[test]
    fn csv_layout() {
        let s = spec(2, 1.0, 1.0, GeneratorMode::RoundSynchronizedCommonShock, Coupling::Multiplicative);
        let c = generate_isi_chunk(&s, 2, &RngHandle::new(1, 0)).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "round,neuron,isi,shock");
        assert_eq!(lines.len(), 5);
        let w = c.shocks()[1];
        assert_eq!(lines[3], format!("1,0,{w},{w}"));

        let s = spec(1, 1.0, 1.0, GeneratorMode::IndependentBaseline, Coupling::Multiplicative);
        let c = generate_isi_chunk(&s, 1, &RngHandle::new(1, 0)).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn injected_nonpositive_entry_detected() {
        let s = spec(3, 0.5, 2.0, GeneratorMode::RoundSynchronizedCommonShock, Coupling::Multiplicative);
        let mut c = generate_isi_chunk(&s, 10, &RngHandle::new(1, 0)).unwrap();
        c.set(2, 4, 0.0);
        let err = c.check_positive().unwrap_err();
        assert!(matches!(err, Error::InvariantViolation(_)));
        assert!(err.to_string().contains("neuron 2 in round 4"));
    }
}
