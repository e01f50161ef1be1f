//! Estimators and diagnostics for regular variation and extremal dependence.
//!
//! Limits in `z -> inf` are never claimed: every diagnostic is a curve over a
//! grid of quantile levels, with exceedance meaning strictly greater than the
//! empirical quantile.

mod dependence;
mod hill;
mod spectral;

pub use dependence::{
    equivalence_ratio, lagged_exceedance_ratios, upper_tail_independence, DependenceRatio,
    EquivalenceCurve, LagMatrix, RatioPoint,
};
pub use hill::{default_k, hill_estimate, hill_sweep, sweep_grid, TailEstimate};
pub(crate) use spectral::radial_check_norms;
pub use spectral::{radial_rv_check, spectral_estimate, RadialCheck, RadialRow, SpectralEstimate, SpherePartition};

use crate::error::{domain, Result};

/// Quantile grid used for all tail curves.
pub const DEFAULT_QUANTILES: [f64; 4] = [0.9, 0.99, 0.999, 0.9999];

/// Empirical (inverse-CDF) quantile of an ascending sample.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

pub fn sorted_copy(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

pub fn quantile(xs: &[f64], q: f64) -> Result<f64> {
    check_level(q)?;
    if xs.is_empty() {
        return Err(domain("quantile of an empty sample"));
    }
    Ok(quantile_sorted(&sorted_copy(xs), q))
}

pub(crate) fn check_level(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("quantile level must lie in (0, 1), got {q}")))
    }
}

pub(crate) fn check_positive(xs: &[f64], what: &str) -> Result<()> {
    match xs.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        None => Ok(()),
        Some(x) => Err(domain(format!("{what} must be positive and finite, found {x}"))),
    }
}

pub(crate) fn check_nonnegative(xs: &[f64], what: &str) -> Result<()> {
    match xs.iter().find(|&&x| !(x >= 0.0 && x.is_finite())) {
        None => Ok(()),
        Some(x) => Err(domain(format!("{what} must be nonnegative and finite, found {x}"))),
    }
}

pub(crate) fn count_above(xs: &[f64], z: f64) -> usize {
    xs.iter().filter(|&&x| x > z).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_cdf_quantile() {
        let xs: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(quantile_sorted(&xs, 0.999), 999.0);
        assert_eq!(quantile_sorted(&xs, 0.5), 500.0);
        assert_eq!(quantile_sorted(&xs, 0.0001), 1.0);
        assert!(quantile(&xs, 1.0).is_err());
        assert!(quantile(&[], 0.5).is_err());
    }
}
