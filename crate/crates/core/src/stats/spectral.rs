use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{domain, insufficient, Result};

use super::{check_level, default_k, hill_estimate, quantile_sorted, sorted_copy, TailEstimate};

/// Exceedances required above the radial threshold.
pub const MIN_EXCEEDANCES: usize = 500;

/// Lattice partition of the L1 unit simplex: a direction `w` falls in cell
/// `(floor(w_1 m), ..., floor(w_{d-1} m))`, each index capped at `m - 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SpherePartition {
    pub bins_per_axis: usize,
}

impl SpherePartition {
    pub fn new(bins_per_axis: usize) -> Result<Self> {
        if bins_per_axis == 0 {
            return Err(domain("partition needs at least one bin per axis"));
        }
        Ok(Self { bins_per_axis })
    }

    pub fn cell(&self, direction: &[f64]) -> Vec<usize> {
        let m = self.bins_per_axis;
        direction[..direction.len() - 1]
            .iter()
            .map(|&w| ((w * m as f64).floor() as usize).min(m - 1))
            .collect()
    }
}

/// Empirical angular measure of `X / |X|_1` given `|X|_1` above a high quantile.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralEstimate {
    pub dimension: usize,
    pub norm: &'static str,
    pub radial_quantile: f64,
    pub radial_threshold: f64,
    pub exceedances: usize,
    pub partition: SpherePartition,
    #[serde(skip)]
    pub angular_samples: Vec<Vec<f64>>,
    /// `(cell, mass)` pairs in cell order; masses sum to 1.
    pub histogram: Vec<(Vec<usize>, f64)>,
}

fn l1(v: &[f64]) -> f64 {
    v.iter().sum()
}

fn check_vectors<V: AsRef<[f64]>>(vectors: &[V]) -> Result<usize> {
    let d = vectors.first().map(|v| v.as_ref().len()).unwrap_or(0);
    if d < 2 {
        return Err(domain("angular estimates need vectors of dimension at least 2"));
    }
    for v in vectors {
        let v = v.as_ref();
        if v.len() != d {
            return Err(domain("vectors must share one dimension"));
        }
        if v.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(domain("vector components must be positive and finite"));
        }
    }
    Ok(d)
}

fn radial_threshold(norms: &[f64], q: f64) -> Result<(f64, usize)> {
    check_level(q)?;
    let z = quantile_sorted(&sorted_copy(norms), q);
    let count = norms.iter().filter(|&&r| r > z).count();
    if count < MIN_EXCEEDANCES {
        return Err(insufficient("exceedances above the radial threshold", MIN_EXCEEDANCES, count));
    }
    Ok((z, count))
}

pub fn spectral_estimate<V: AsRef<[f64]>>(
    vectors: &[V],
    radial_quantile: f64,
    partition: SpherePartition,
) -> Result<SpectralEstimate> {
    let d = check_vectors(vectors)?;
    let norms: Vec<f64> = vectors.iter().map(|v| l1(v.as_ref())).collect();
    let (threshold, exceedances) = radial_threshold(&norms, radial_quantile)?;

    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut angular_samples = Vec::with_capacity(exceedances);
    for (v, &r) in vectors.iter().zip(&norms) {
        if r > threshold {
            let w: Vec<f64> = v.as_ref().iter().map(|x| x / r).collect();
            *counts.entry(partition.cell(&w)).or_default() += 1;
            angular_samples.push(w);
        }
    }
    let histogram = counts
        .into_iter()
        .map(|(cell, c)| (cell, c as f64 / exceedances as f64))
        .collect();
    Ok(SpectralEstimate {
        dimension: d,
        norm: "L1",
        radial_quantile,
        radial_threshold: threshold,
        exceedances,
        partition,
        angular_samples,
        histogram,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RadialRow {
    pub base_quantile: f64,
    pub t: f64,
    pub empirical: f64,
    pub fitted: f64,
    pub deviation: f64,
}

/// Radial exceedance ratios `P(|X| > t x) / P(|X| > x)` against `t^-alpha_hat`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadialCheck {
    pub norm: &'static str,
    pub tail: TailEstimate,
    pub rows: Vec<RadialRow>,
    pub max_deviation: f64,
}

pub fn radial_rv_check<V: AsRef<[f64]>>(
    vectors: &[V],
    t_grid: &[f64],
    base_quantiles: &[f64],
) -> Result<RadialCheck> {
    check_vectors(vectors)?;
    let norms: Vec<f64> = vectors.iter().map(|v| l1(v.as_ref())).collect();
    radial_check_norms(&norms, t_grid, base_quantiles)
}

pub(crate) fn radial_check_norms(norms: &[f64], t_grid: &[f64], base_quantiles: &[f64]) -> Result<RadialCheck> {
    if let Some(t) = t_grid.iter().find(|&&t| !(t >= 1.0 && t.is_finite())) {
        return Err(domain(format!("radial multipliers must be >= 1, got {t}")));
    }
    let tail = hill_estimate(norms, default_k(norms.len()))?;
    let mut rows = Vec::new();
    for &q in base_quantiles {
        let (x, base) = radial_threshold(norms, q)?;
        for &t in t_grid {
            let above = norms.iter().filter(|&&r| r > t * x).count();
            let empirical = above as f64 / base as f64;
            let fitted = t.powf(-tail.alpha_hat);
            rows.push(RadialRow {
                base_quantile: q,
                t,
                empirical,
                fitted,
                deviation: (empirical - fitted).abs(),
            });
        }
    }
    let max_deviation = rows.iter().map(|r| r.deviation).fold(0.0, f64::max);
    Ok(RadialCheck {
        norm: "L1",
        tail,
        rows,
        max_deviation,
    })
}
