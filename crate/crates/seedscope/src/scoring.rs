//! Proper scoring rules and interval metrics for Gaussian-mixture
//! predictive distributions.
//!
//! CRPS uses the closed form for Gaussians and uniform mixtures of
//! Gaussians; interval metrics locate central-interval endpoints by
//! bisection on the mixture CDF.

use crate::methods::PredictiveDistribution;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Which endpoint metric to compute over the test set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Crps,
    Nll,
    IntervalScore,
    Picp,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Crps => "crps",
            MetricKind::Nll => "nll",
            MetricKind::IntervalScore => "interval_score",
            MetricKind::Picp => "picp",
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Test-set aggregate of a per-example metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_example: Option<Vec<f64>>,
    /// Examples whose density underflowed and was clamped (NLL only).
    #[serde(default)]
    pub flagged: usize,
}

const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3; // 1/sqrt(pi)
const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf(z / SQRT_2))
}

/// Standard normal PDF.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// CRPS of a single Gaussian forecast N(mu, sigma^2) against observation y.
///
/// `sigma * [ z (2 Phi(z) - 1) + 2 phi(z) - 1/sqrt(pi) ]` with
/// `z = (y - mu) / sigma`.
pub fn crps_gaussian(mu: f64, sigma: f64, y: f64) -> f64 {
    assert!(sigma > 0.0, "crps_gaussian requires sigma > 0, got {sigma}");
    let z = (y - mu) / sigma;
    sigma * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - INV_SQRT_PI)
}

/// `A(m, s^2) = E|X|` for `X ~ N(m, s^2)`.
fn abs_moment(m: f64, s2: f64) -> f64 {
    let s = s2.sqrt();
    let z = m / s;
    m * (2.0 * normal_cdf(z) - 1.0) + 2.0 * s * normal_pdf(z)
}

/// CRPS of a uniform Gaussian mixture via the pairwise closed form:
/// `sum_i w_i A(y - mu_i, var_i) - 1/2 sum_ij w_i w_j A(mu_i - mu_j, var_i + var_j)`.
pub fn crps_mixture(dist: &PredictiveDistribution, y: f64) -> f64 {
    let comps = dist.components();
    let k = comps.len();
    let w = 1.0 / k as f64;

    let mut first = 0.0;
    for c in comps {
        first += abs_moment(y - c.mu, c.var);
    }
    first *= w;

    // Pairwise term is symmetric; compute the upper triangle once.
    let mut cross = 0.0;
    for i in 0..k {
        // Diagonal: A(0, 2 var_i) = 2 sqrt(2 var_i) phi(0).
        cross += 2.0 * (2.0 * comps[i].var).sqrt() * normal_pdf(0.0);
        for j in (i + 1)..k {
            cross += 2.0 * abs_moment(comps[i].mu - comps[j].mu, comps[i].var + comps[j].var);
        }
    }
    cross *= w * w;

    first - 0.5 * cross
}

/// Density floor applied before taking the log in the NLL metric.
const DENSITY_FLOOR: f64 = 1e-300;

/// Negative log mixture density including the 1/2 log(2 pi) constant.
/// Returns the score and whether the density underflowed the floor.
pub fn nll_metric_flagged(dist: &PredictiveDistribution, y: f64) -> (f64, bool) {
    let comps = dist.components();
    let w = 1.0 / comps.len() as f64;
    // log-sum-exp over component log densities for numeric range.
    let log_terms: Vec<f64> = comps
        .iter()
        .map(|c| {
            let z2 = (y - c.mu) * (y - c.mu) / c.var;
            -0.5 * (z2 + c.var.ln() + (2.0 * PI).ln()) + w.ln()
        })
        .collect();
    let max = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_density = if max == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        max + log_terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    };
    if log_density < DENSITY_FLOOR.ln() {
        (-DENSITY_FLOOR.ln(), true)
    } else {
        (-log_density, false)
    }
}

/// Negative log mixture density with underflow clamped at 1e-300.
pub fn nll_metric(dist: &PredictiveDistribution, y: f64) -> f64 {
    nll_metric_flagged(dist, y).0
}

/// Mixture CDF at x.
fn mixture_cdf(dist: &PredictiveDistribution, x: f64) -> f64 {
    let comps = dist.components();
    let w = 1.0 / comps.len() as f64;
    comps.iter().map(|c| w * normal_cdf((x - c.mu) / c.var.sqrt())).sum()
}

const BISECTION_MAX_ITERS: usize = 200;
const BISECTION_TOL: f64 = 1e-10;

/// Mixture quantile by bisection on the CDF.
pub fn mixture_quantile(dist: &PredictiveDistribution, q: f64) -> f64 {
    assert!((0.0..1.0).contains(&q) && q > 0.0, "quantile level must be in (0, 1)");
    let comps = dist.components();
    // Bracket: +-40 component standard deviations covers any q representable
    // in f64 for every component.
    let mut lo = comps
        .iter()
        .map(|c| c.mu - 40.0 * c.var.sqrt())
        .fold(f64::INFINITY, f64::min);
    let mut hi = comps
        .iter()
        .map(|c| c.mu + 40.0 * c.var.sqrt())
        .fold(f64::NEG_INFINITY, f64::max);
    for iter in 0..=BISECTION_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= BISECTION_TOL {
            return mid;
        }
        assert!(
            iter < BISECTION_MAX_ITERS,
            "mixture quantile bisection failed to converge in {BISECTION_MAX_ITERS} iterations \
             (q={q}, bracket [{lo}, {hi}])"
        );
        if mixture_cdf(dist, mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    unreachable!()
}

/// Central prediction interval of the mixture at the given coverage level.
pub fn central_interval(dist: &PredictiveDistribution, level: f64) -> (f64, f64) {
    assert!((0.0..1.0).contains(&level) && level > 0.0, "level must be in (0, 1)");
    let lower = mixture_quantile(dist, (1.0 - level) / 2.0);
    let upper = mixture_quantile(dist, (1.0 + level) / 2.0);
    (lower, upper)
}

/// Interval score of the central `level` interval:
/// `(u - l) + (2/alpha)(l - y) 1[y < l] + (2/alpha)(y - u) 1[y > u]`
/// with `alpha = 1 - level`.
pub fn interval_score(dist: &PredictiveDistribution, y: f64, level: f64) -> f64 {
    let (l, u) = central_interval(dist, level);
    let alpha = 1.0 - level;
    let mut score = u - l;
    if y < l {
        score += 2.0 / alpha * (l - y);
    } else if y > u {
        score += 2.0 / alpha * (y - u);
    }
    score
}

/// Prediction interval coverage probability over a test set.
pub fn picp(dists: &[PredictiveDistribution], ys: &[f64], level: f64) -> f64 {
    assert_eq!(dists.len(), ys.len());
    assert!(!dists.is_empty());
    let covered = dists
        .iter()
        .zip(ys)
        .filter(|(d, &y)| {
            let (l, u) = central_interval(d, level);
            l <= y && y <= u
        })
        .count();
    covered as f64 / dists.len() as f64
}

/// Mean of the per-example metric over a fixed test set.
///
/// For PICP the per-example value is the coverage indicator, so the mean is
/// the coverage fraction.
pub fn mean_metric(
    dists: &[PredictiveDistribution],
    ys: &[f64],
    kind: MetricKind,
    interval_level: f64,
) -> ScoreSummary {
    assert_eq!(dists.len(), ys.len(), "predictions/targets length mismatch");
    assert!(!dists.is_empty(), "mean_metric needs at least one example");
    let mut flagged = 0usize;
    let per_example: Vec<f64> = dists
        .iter()
        .zip(ys)
        .map(|(d, &y)| match kind {
            MetricKind::Crps => crps_mixture(d, y),
            MetricKind::Nll => {
                let (score, clamped) = nll_metric_flagged(d, y);
                if clamped {
                    flagged += 1;
                }
                score
            }
            MetricKind::IntervalScore => interval_score(d, y, interval_level),
            MetricKind::Picp => {
                let (l, u) = central_interval(d, interval_level);
                if l <= y && y <= u {
                    1.0
                } else {
                    0.0
                }
            }
        })
        .collect();
    let mean = per_example.iter().sum::<f64>() / per_example.len() as f64;
    ScoreSummary {
        mean,
        per_example: Some(per_example),
        flagged,
    }
}
