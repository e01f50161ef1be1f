use serde::Serialize;

use crate::error::{domain, insufficient, Result};

use super::{check_level, check_nonnegative, check_positive, count_above, quantile_sorted, sorted_copy};

/// Minimum sample size for tail-equivalence curves.
pub const MIN_EQUIVALENCE_SAMPLES: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatioPoint {
    pub quantile: f64,
    pub threshold: f64,
    pub ratio: f64,
}

/// Tail-ratio curve `P(X > z_q) / P(Y > z_q)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivalenceCurve {
    pub points: Vec<RatioPoint>,
}

impl EquivalenceCurve {
    /// Largest over smallest ratio along the grid; stays near 1 for equivalent tails.
    pub fn drift(&self) -> f64 {
        let (lo, hi) = self.points.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
            (lo.min(p.ratio), hi.max(p.ratio))
        });
        hi / lo
    }

    /// True when every ratio lies in `[lo, hi]`.
    pub fn within(&self, lo: f64, hi: f64) -> bool {
        self.points.iter().all(|p| p.ratio >= lo && p.ratio <= hi)
    }

    pub fn at(&self, quantile: f64) -> Option<&RatioPoint> {
        self.points.iter().find(|p| p.quantile == quantile)
    }
}

/// Ratio of empirical tails at the quantiles of the pooled sample.
pub fn equivalence_ratio(x: &[f64], y: &[f64], quantiles: &[f64]) -> Result<EquivalenceCurve> {
    check_positive(x, "equivalence samples")?;
    check_positive(y, "equivalence samples")?;
    let smallest = x.len().min(y.len());
    if smallest < MIN_EQUIVALENCE_SAMPLES {
        return Err(insufficient("tail equivalence", MIN_EQUIVALENCE_SAMPLES, smallest));
    }
    let mut pooled = Vec::with_capacity(x.len() + y.len());
    pooled.extend_from_slice(x);
    pooled.extend_from_slice(y);
    pooled.sort_unstable_by(f64::total_cmp);

    let points = quantiles
        .iter()
        .map(|&q| {
            check_level(q)?;
            let z = quantile_sorted(&pooled, q);
            let cx = count_above(x, z);
            let cy = count_above(y, z);
            if cx == 0 || cy == 0 {
                return Err(insufficient(format!("upper tail above the {q} quantile"), 1, 0));
            }
            let ratio = (cx as f64 / x.len() as f64) / (cy as f64 / y.len() as f64);
            Ok(RatioPoint {
                quantile: q,
                threshold: z,
                ratio,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EquivalenceCurve { points })
}

/// Joint-exceedance ratios against a designated reference marginal.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DependenceRatio {
    /// Which variate plays the controlling tail.
    pub reference: String,
    pub points: Vec<RatioPoint>,
}

impl DependenceRatio {
    pub fn at(&self, quantile: f64) -> Option<f64> {
        self.points.iter().find(|p| p.quantile == quantile).map(|p| p.ratio)
    }
}

/// `P(X > z_q, Y > z_q) / P(R > z_q)` with `z_q` the `q`-quantile of the
/// reference `R`. Tends to 0 under upper-tail independence and to a positive
/// constant under full dependence.
pub fn upper_tail_independence(
    x: &[f64],
    y: &[f64],
    reference: &[f64],
    reference_name: &str,
    quantiles: &[f64],
) -> Result<DependenceRatio> {
    if x.len() != y.len() {
        return Err(domain(format!(
            "paired samples required, got lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() || reference.is_empty() {
        return Err(insufficient("upper-tail dependence", 1, 0));
    }
    check_positive(x, "dependence samples")?;
    check_positive(y, "dependence samples")?;
    check_positive(reference, "reference samples")?;
    let sorted_ref = sorted_copy(reference);

    let mut points = Vec::with_capacity(quantiles.len());
    for &q in quantiles {
        check_level(q)?;
        let z = quantile_sorted(&sorted_ref, q);
        let ref_count = count_above(reference, z);
        if ref_count == 0 {
            return Err(insufficient(format!("reference tail above the {q} quantile"), 1, 0));
        }
        let joint = x.iter().zip(y).filter(|(&a, &b)| a > z && b > z).count();
        let ratio = if x.len() == reference.len() {
            joint as f64 / ref_count as f64
        } else {
            (joint as f64 / x.len() as f64) / (ref_count as f64 / reference.len() as f64)
        };
        points.push(RatioPoint {
            quantile: q,
            threshold: z,
            ratio,
        });
    }
    Ok(DependenceRatio {
        reference: reference_name.to_string(),
        points,
    })
}

/// Lag-by-quantile matrix of `P(X_h > z, X_{h+lag} > z) / P(X > z)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LagMatrix {
    pub lags: Vec<usize>,
    pub quantiles: Vec<f64>,
    pub thresholds: Vec<f64>,
    /// `ratios[l][q]` for `lags[l]`, `quantiles[q]`.
    pub ratios: Vec<Vec<f64>>,
}

impl LagMatrix {
    pub fn ratio(&self, lag: usize, quantile: f64) -> Option<f64> {
        let l = self.lags.iter().position(|&x| x == lag)?;
        let q = self.quantiles.iter().position(|&x| x == quantile)?;
        Some(self.ratios[l][q])
    }

    /// Largest ratio at `quantile` over the lags accepted by `keep`.
    pub fn max_over(&self, quantile: f64, keep: impl Fn(usize) -> bool) -> Option<f64> {
        let q = self.quantiles.iter().position(|&x| x == quantile)?;
        self.lags
            .iter()
            .zip(&self.ratios)
            .filter(|(&lag, _)| keep(lag))
            .map(|(_, row)| row[q])
            .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))))
    }
}

/// Pairwise upper-tail dependence of a sequence with its own lags, pooled over
/// positions. Lag 0 is the comonotone control and returns exactly 1.
pub fn lagged_exceedance_ratios(
    samples: &[f64],
    lags: &[usize],
    quantiles: &[f64],
    min_samples: usize,
) -> Result<LagMatrix> {
    let n = samples.len();
    if n < min_samples {
        return Err(insufficient("lagged tail-independence diagnostic", min_samples, n));
    }
    check_nonnegative(samples, "diagnostic samples")?;
    if let Some(&lag) = lags.iter().find(|&&l| l >= n) {
        return Err(domain(format!("lag {lag} exceeds sample length {n}")));
    }
    let sorted = sorted_copy(samples);
    let mut thresholds = Vec::with_capacity(quantiles.len());
    let mut marginal = Vec::with_capacity(quantiles.len());
    for &q in quantiles {
        check_level(q)?;
        let z = quantile_sorted(&sorted, q);
        let c = count_above(samples, z);
        if c == 0 {
            return Err(insufficient(format!("upper tail above the {q} quantile"), 1, 0));
        }
        thresholds.push(z);
        marginal.push(c as f64 / n as f64);
    }
    let ratios = lags
        .iter()
        .map(|&lag| {
            let pairs = n - lag;
            thresholds
                .iter()
                .zip(&marginal)
                .map(|(&z, &p)| {
                    let joint = samples[..pairs]
                        .iter()
                        .zip(&samples[lag..])
                        .filter(|(&a, &b)| a > z && b > z)
                        .count();
                    (joint as f64 / pairs as f64) / p
                })
                .collect()
        })
        .collect();
    Ok(LagMatrix {
        lags: lags.to_vec(),
        quantiles: quantiles.to_vec(),
        thresholds,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngHandle;
    use crate::rv::{sample_pareto, TailModel};

    fn pareto(alpha: f64, scale: f64, n: usize, stream: u64) -> Vec<f64> {
        let m = TailModel::new(alpha, scale).unwrap();
        let mut rng = RngHandle::new(31, stream);
        (0..n).map(|_| sample_pareto(&m, &mut rng)).collect()
    }

    #[test]
    fn identical_samples_are_equivalent() {
        let x = pareto(0.6, 1.0, 20_000, 0);
        let c = equivalence_ratio(&x, &x, &[0.9, 0.99, 0.999]).unwrap();
        assert!(c.points.iter().all(|p| p.ratio == 1.0));
        assert_eq!(c.drift(), 1.0);
    }

    #[test]
    fn scale_changes_constant_only() {
        let x = pareto(0.6, 1.0, 400_000, 1);
        let y = pareto(0.6, 2.0, 400_000, 2);
        let c = equivalence_ratio(&x, &y, &[0.99, 0.999]).unwrap();
        for p in &c.points {
            // 2^-0.6
            assert!((p.ratio - 0.659_753_955).abs() < 0.05, "{p:?}");
        }
    }

    #[test]
    fn index_mismatch_drifts() {
        let x = pareto(0.6, 1.0, 200_000, 3);
        let y = pareto(0.8, 1.0, 200_000, 4);
        let c = equivalence_ratio(&x, &y, &[0.9, 0.99, 0.999, 0.9999]).unwrap();
        let r: Vec<f64> = c.points.iter().map(|p| p.ratio).collect();
        assert!(r.windows(2).all(|w| w[1] > w[0]), "{r:?}");
        assert!(c.drift() > 2.0);
        // exact tails give z^0.2 at the pooled threshold; check the top point
        let top = c.points.last().unwrap();
        assert!((top.ratio / top.threshold.powf(0.2) - 1.0).abs() < 0.35);
    }

    #[test]
    fn equivalence_errors() {
        let x = pareto(0.6, 1.0, 100, 0);
        assert!(matches!(
            equivalence_ratio(&x, &x, &[0.9]),
            Err(crate::Error::InsufficientData { .. })
        ));
        let x = pareto(0.6, 1.0, 10_000, 0);
        let y = vec![1.0; 10_000];
        // y has no mass above the pooled quantile
        assert!(equivalence_ratio(&x, &y, &[0.9]).is_err());
    }

    #[test]
    fn comonotone_ratio_is_one() {
        let x = pareto(0.6, 1.0, 10_000, 5);
        let d = upper_tail_independence(&x, &x, &x, "x", &[0.9, 0.99, 0.999, 0.9999]).unwrap();
        assert!(d.points.iter().all(|p| p.ratio == 1.0));
        assert_eq!(d.reference, "x");
    }

    #[test]
    fn independent_pairs_vanish() {
        let x = pareto(0.6, 1.0, 1_000_000, 6);
        let y = pareto(0.6, 1.0, 1_000_000, 7);
        let d = upper_tail_independence(&x, &y, &x, "x", &[0.9, 0.99, 0.999]).unwrap();
        let r: Vec<f64> = d.points.iter().map(|p| p.ratio).collect();
        // independence factorizes: ratio ~ 1 - q
        assert!((r[0] - 0.1).abs() < 0.01);
        assert!((r[1] - 0.01).abs() < 0.003);
        assert!(r[2] < 0.004);
    }

    #[test]
    fn common_shock_pairs_stay_positive() {
        let mut rng = RngHandle::new(9, 9);
        let m = TailModel::new(0.6, 1.0).unwrap();
        let n = 1_000_000;
        let (mut x, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for _ in 0..n {
            let w = sample_pareto(&m, &mut rng);
            x.push((0.5 + 1.5 * rng.uniform()) * w);
            y.push((0.5 + 1.5 * rng.uniform()) * w);
        }
        let d = upper_tail_independence(&x, &y, &x, "x", &[0.999]).unwrap();
        // E[min(U1,U2)^a] / E[U^a] by Simpson on the density of the minimum
        let oracle = min_moment_oracle(0.6) / crate::rv::MultiplierBounds::new(0.5, 2.0).unwrap().moment(0.6);
        assert!((d.points[0].ratio - oracle).abs() < 0.08, "{} vs {oracle}", d.points[0].ratio);
    }

    fn min_moment_oracle(a: f64) -> f64 {
        // min of two U[0.5, 2]: density 2 (2 - u) / 1.5^2
        let steps = 20_000;
        let h = 1.5 / steps as f64;
        let f = |u: f64| u.powf(a) * 2.0 * (2.0 - u) / 2.25;
        let mut acc = f(0.5) + f(2.0);
        for i in 1..steps {
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(0.5 + h * i as f64);
        }
        acc * h / 3.0
    }

    #[test]
    fn unpaired_rejected() {
        assert!(upper_tail_independence(&[1.0, 2.0], &[1.0], &[1.0], "x", &[0.5]).is_err());
    }

    #[test]
    fn lag_matrix_controls() {
        let x = pareto(0.6, 1.0, 200_000, 8);
        let m = lagged_exceedance_ratios(&x, &[0, 1, 5], &[0.999], 100_000).unwrap();
        assert_eq!(m.ratio(0, 0.999), Some(1.0));
        assert!(m.ratio(1, 0.999).unwrap() < 0.01);
        assert!(m.max_over(0.999, |l| l >= 1).unwrap() < 0.01);

        let dup: Vec<f64> = x.iter().flat_map(|&v| [v, v]).collect();
        let m = lagged_exceedance_ratios(&dup, &[1], &[0.999], 100_000).unwrap();
        // pairs (2h, 2h+1) coincide, so half of the lag-1 pairs are comonotone
        assert!((m.ratio(1, 0.999).unwrap() - 0.5).abs() < 0.01);

        assert!(matches!(
            lagged_exceedance_ratios(&x[..10], &[1], &[0.9], 100_000),
            Err(crate::Error::InsufficientData { .. })
        ));
    }
}
