//! Scalar heavy-tailed primitives: Pareto quantiles and samplers, and the
//! bounded multipliers used by the common-shock generators.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::rng::RngHandle;

/// Slowly varying factor of the tail. Only the constant case is generated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlowVariation {
    #[default]
    None,
}

/// Pure Pareto tail `P(X > x) = (scale / x)^alpha` for `x >= scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    alpha: f64,
    scale: f64,
    #[serde(default)]
    slow_variation: SlowVariation,
}

impl TailModel {
    /// Requires `0 < alpha < 1` and `scale > 0`.
    pub fn new(alpha: f64, scale: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(domain(format!(
                "tail index alpha must lie in the open interval (0, 1), got {alpha}"
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(domain(format!("scale must be positive and finite, got {scale}")));
        }
        Ok(Self {
            alpha,
            scale,
            slow_variation: SlowVariation::None,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn slow_variation(&self) -> SlowVariation {
        self.slow_variation
    }

    /// Exact survival function.
    pub fn survival(&self, x: f64) -> f64 {
        if x <= self.scale {
            1.0
        } else {
            (self.scale / x).powf(self.alpha)
        }
    }
}

/// Inverse CDF: `scale * (1 - u)^(-1/alpha)` for `u` in `[0, 1)`.
pub fn pareto_quantile(model: &TailModel, u: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(domain(format!("probability must lie in [0, 1), got {u}")));
    }
    Ok(quantile_unchecked(model, u))
}

#[inline]
pub(crate) fn quantile_unchecked(model: &TailModel, u: f64) -> f64 {
    model.scale * (1.0 - u).powf(-1.0 / model.alpha)
}

/// One Pareto draw by inverse transform.
pub fn sample_pareto(model: &TailModel, rng: &mut RngHandle) -> f64 {
    quantile_unchecked(model, rng.uniform())
}

/// Interval `[lo, hi]` with `0 < lo <= hi < inf`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierBounds {
    pub lo: f64,
    pub hi: f64,
}

impl MultiplierBounds {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo > 0.0 && lo.is_finite()) {
            return Err(domain(format!("multiplier lower bound must be positive, got {lo}")));
        }
        if !(hi >= lo && hi.is_finite()) {
            return Err(domain(format!(
                "multiplier upper bound must be finite and >= lower bound {lo}, got {hi}"
            )));
        }
        Ok(Self { lo, hi })
    }

    #[inline]
    pub(crate) fn at(&self, u: f64) -> f64 {
        self.lo + (self.hi - self.lo) * u
    }

    /// `E[U^p]` for `U` uniform on the interval.
    pub fn moment(&self, p: f64) -> f64 {
        if self.hi == self.lo {
            return self.lo.powf(p);
        }
        let q = p + 1.0;
        (self.hi.powf(q) - self.lo.powf(q)) / (q * (self.hi - self.lo))
    }
}

/// Uniform draw on `[lo, hi]`.
pub fn sample_bounded_multiplier(lo: f64, hi: f64, rng: &mut RngHandle) -> Result<f64> {
    let bounds = MultiplierBounds::new(lo, hi)?;
    Ok(bounds.at(rng.uniform()))
}
