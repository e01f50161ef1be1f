use serde::Serialize;

use crate::error::{domain, Result};

use super::check_positive;

/// Tail-index estimate from the top `k` order statistics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailEstimate {
    pub alpha_hat: f64,
    pub k: usize,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_samples: usize,
}

/// `ceil(n^0.6)`, kept below `n`.
pub fn default_k(n: usize) -> usize {
    ((n as f64).powf(0.6).ceil() as usize).clamp(1, n.saturating_sub(1).max(1))
}

/// Hill estimator: reciprocal mean log-excess of the top `k` order statistics
/// over the `(k+1)`-th. The 95% interval uses `alpha_hat * (1 +- 1.96 / sqrt(k))`.
pub fn hill_estimate(samples: &[f64], k: usize) -> Result<TailEstimate> {
    let desc = descending(samples)?;
    estimate_sorted(&desc, k)
}

/// Hill estimates over several `k`, for a stability (Hill-plot) check.
pub fn hill_sweep(samples: &[f64], ks: &[usize]) -> Result<Vec<TailEstimate>> {
    let desc = descending(samples)?;
    ks.iter().map(|&k| estimate_sorted(&desc, k)).collect()
}

/// Roughly log-spaced `k` values below `n`, always including [`default_k`].
pub fn sweep_grid(n: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = [10usize, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10_000, 20_000, 50_000]
        .into_iter()
        .filter(|&k| k < n)
        .collect();
    if n > 1 {
        ks.push(default_k(n));
    }
    ks.sort_unstable();
    ks.dedup();
    ks
}

fn descending(samples: &[f64]) -> Result<Vec<f64>> {
    check_positive(samples, "Hill samples")?;
    let mut v = samples.to_vec();
    v.sort_unstable_by(|a, b| b.total_cmp(a));
    Ok(v)
}

fn estimate_sorted(desc: &[f64], k: usize) -> Result<TailEstimate> {
    let n = desc.len();
    if k == 0 || k >= n {
        return Err(domain(format!("need 1 <= k < n, got k = {k}, n = {n}")));
    }
    let anchor = desc[k].ln();
    let mean_excess = desc[..k].iter().map(|x| x.ln() - anchor).sum::<f64>() / k as f64;
    if mean_excess <= 0.0 {
        return Err(domain("top order statistics are tied; Hill estimate undefined"));
    }
    let alpha_hat = 1.0 / mean_excess;
    let half = 1.96 / (k as f64).sqrt();
    Ok(TailEstimate {
        alpha_hat,
        k,
        ci_low: alpha_hat * (1.0 - half),
        ci_high: alpha_hat * (1.0 + half),
        n_samples: n,
    })
}
