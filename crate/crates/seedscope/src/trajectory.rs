//! Variance trajectories, power-law fits, and monotonicity labels.
//!
//! A trajectory is the sequence of across-run metric variances over
//! increasing training sizes. The descriptive model `Var ~ C n^{-alpha}`
//! is fitted by ordinary least squares in log-log space; `R^2` measures
//! how regular the trajectory is and the monotonicity label flags whether
//! its maximum sits at the smallest size.

use crate::error::{Error, Result};
use crate::scoring::MetricKind;
use serde::{Deserialize, Serialize};

/// All realized metric values for one (method, dataset) pair, per size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub method: String,
    pub dataset: String,
    pub metric: MetricKind,
    pub points: Vec<TrajectoryPoint>,
}

/// One training size with its valid realization values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub n: usize,
    /// Valid metric values ordered by replicate index.
    pub values: Vec<f64>,
    pub valid_count: usize,
}

impl TrajectoryRecord {
    /// Enforce strictly increasing sizes and value/count agreement.
    pub fn new(
        method: String,
        dataset: String,
        metric: MetricKind,
        points: Vec<TrajectoryPoint>,
    ) -> Result<Self> {
        for pair in points.windows(2) {
            if pair[1].n <= pair[0].n {
                return Err(Error::Analysis(format!(
                    "trajectory sizes must be strictly increasing, got {} then {}",
                    pair[0].n, pair[1].n
                )));
            }
        }
        for p in &points {
            if p.values.len() != p.valid_count {
                return Err(Error::Analysis(format!(
                    "point n={} has {} values but valid_count={}",
                    p.n,
                    p.values.len(),
                    p.valid_count
                )));
            }
        }
        Ok(TrajectoryRecord {
            method,
            dataset,
            metric,
            points,
        })
    }

    /// The (n, variance) pairs for all sizes with at least two valid runs,
    /// optionally truncating each cell to its first `r_prime` values.
    pub fn variances(&self, r_prime: Option<usize>) -> Vec<(usize, f64)> {
        self.points
            .iter()
            .filter_map(|p| {
                let values = match r_prime {
                    Some(r) => &p.values[..p.values.len().min(r)],
                    None => &p.values[..],
                };
                if values.len() >= 2 {
                    Some((p.n, empirical_variance(values)))
                } else {
                    None
                }
            })
            .collect()
    }
}

/// Unbiased sample variance (denominator R-1).
pub fn empirical_variance(values: &[f64]) -> f64 {
    assert!(values.len() >= 2, "variance needs at least two values");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

/// Power-law fit of a variance trajectory plus its monotonicity label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Decay exponent (negated log-log slope).
    pub alpha: f64,
    /// Amplitude `C` in `Var ~ C n^{-alpha}`.
    pub c: f64,
    /// Coefficient of determination in log space.
    pub r2: f64,
    pub monotone: bool,
    /// Points excluded from the fit because their variance was zero.
    pub excluded_zero_variance: usize,
}

/// Monotone label: the variance maximum occurs at the smallest training
/// size (ties broken toward the smallest n).
pub fn classify_monotone(variances: &[f64]) -> bool {
    assert!(variances.len() >= 2, "monotonicity needs at least two points");
    let mut argmax = 0;
    for (i, &v) in variances.iter().enumerate() {
        if v > variances[argmax] {
            argmax = i;
        }
    }
    argmax == 0
}

/// OLS fit of `log v = log C - alpha log n` over points with positive
/// variance. Zero-variance points are excluded (flooring them would invent
/// curvature) and counted. Needs at least 3 usable points.
///
/// `SS_tot = 0` (all log variances equal) means the flat fit is exact, so
/// `R^2 := 1`.
pub fn fit_power_law(ns: &[usize], variances: &[f64]) -> Result<PowerLawFit> {
    assert_eq!(ns.len(), variances.len(), "size/variance length mismatch");
    let monotone = classify_monotone(variances);

    let usable: Vec<(f64, f64)> = ns
        .iter()
        .zip(variances)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&n, &v)| ((n as f64).ln(), v.ln()))
        .collect();
    let excluded = variances.len() - usable.len();
    if usable.len() < 3 {
        return Err(Error::Analysis(format!(
            "power-law fit needs >= 3 points with positive variance, got {}",
            usable.len()
        )));
    }

    let k = usable.len() as f64;
    let mean_x = usable.iter().map(|(x, _)| x).sum::<f64>() / k;
    let mean_y = usable.iter().map(|(_, y)| y).sum::<f64>() / k;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in &usable {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;

    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (x, y) in &usable {
        let fitted = intercept + slope * x;
        ss_res += (y - fitted) * (y - fitted);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };

    Ok(PowerLawFit {
        alpha: -slope,
        c: intercept.exp(),
        r2,
        monotone,
        excluded_zero_variance: excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn two_point_unbiased_variance() {
        assert_eq!(empirical_variance(&[1.0, 3.0]), 2.0);
    }

    #[test]
    fn constant_values_zero_variance() {
        assert_eq!(empirical_variance(&[2.5; 10]), 0.0);
    }

    #[test]
    fn variance_matches_chi_square_sampling_oracle() {
        // 10^5 draws from N(0, 4): the unbiased variance estimator is
        // 4 * chi^2_{n-1} / (n-1), sd = 4 sqrt(2/(n-1)).
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let values: Vec<f64> = (0..n)
            .map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let got = empirical_variance(&values);
        let sd = 4.0 * (2.0 / (n as f64 - 1.0)).sqrt();
        assert!((got - 4.0).abs() <= 3.0 * sd, "variance {got} outside 3 sigma of 4");
    }

    #[test]
    fn exact_power_law_recovered() {
        let ns = [10usize, 100, 1000];
        let vs = [1.0, 1e-2, 1e-4];
        let fit = fit_power_law(&ns, &vs).unwrap();
        assert!((fit.alpha - 2.0).abs() < 1e-12, "alpha {}", fit.alpha);
        assert!((fit.c - 100.0).abs() / 100.0 < 1e-12, "c {}", fit.c);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        assert!(fit.monotone);
    }

    #[test]
    fn constant_variances_flat_law() {
        let ns = [10usize, 20, 50, 100];
        let vs = [0.5; 4];
        let fit = fit_power_law(&ns, &vs).unwrap();
        assert!(fit.alpha.abs() < 1e-12);
        assert_eq!(fit.r2, 1.0);
        assert!(fit.monotone, "ties break toward the smallest n");
    }

    #[test]
    fn random_power_laws_recovered_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let ns = [10usize, 20, 30, 50, 100, 200, 500, 1000, 2000];
        for _ in 0..50 {
            let alpha: f64 = rng.gen_range(0.5..3.0);
            let c: f64 = 10f64.powf(rng.gen_range(-4.0..2.0));
            let vs: Vec<f64> = ns.iter().map(|&n| c * (n as f64).powf(-alpha)).collect();
            let fit = fit_power_law(&ns, &vs).unwrap();
            assert!((fit.alpha - alpha).abs() / alpha < 1e-10, "{} vs {alpha}", fit.alpha);
            assert!((fit.c - c).abs() / c < 1e-10, "{} vs {c}", fit.c);
            assert!((fit.r2 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scale_covariance() {
        let ns = [10usize, 30, 100, 300];
        let vs = [2.0, 0.7, 0.2, 0.06];
        let base = fit_power_law(&ns, &vs).unwrap();
        let k = 37.5;
        let scaled: Vec<f64> = vs.iter().map(|v| v * k).collect();
        let fit = fit_power_law(&ns, &scaled).unwrap();
        assert!((fit.alpha - base.alpha).abs() < 1e-12);
        assert!((fit.r2 - base.r2).abs() < 1e-12);
        assert!((fit.c - base.c * k).abs() / (base.c * k) < 1e-12);
        assert_eq!(fit.monotone, base.monotone);
    }

    #[test]
    fn monotone_labels() {
        assert!(classify_monotone(&[5.0, 3.0, 2.0, 1.0]), "non-increasing");
        assert!(!classify_monotone(&[3.0, 5.0, 2.0, 1.0]), "interior peak");
        assert!(
            classify_monotone(&[9.0, 3.0, 4.0, 1.0]),
            "boundary peak with interior wiggle: argmax at smallest n"
        );
        assert!(classify_monotone(&[2.0, 2.0, 1.0]), "tie breaks toward smallest n");
    }

    #[test]
    fn zero_variance_points_excluded() {
        let ns = [10usize, 20, 50, 100, 200];
        let vs = [1.0, 0.5, 0.0, 0.05, 0.01];
        let fit = fit_power_law(&ns, &vs).unwrap();
        assert_eq!(fit.excluded_zero_variance, 1);

        let too_few = fit_power_law(&[10, 20, 50], &[0.0, 0.0, 1.0]);
        assert!(too_few.is_err());
    }

    #[test]
    fn record_invariants_enforced() {
        let good = TrajectoryRecord::new(
            "map".into(),
            "synthetic".into(),
            MetricKind::Crps,
            vec![
                TrajectoryPoint { n: 10, values: vec![1.0, 2.0], valid_count: 2 },
                TrajectoryPoint { n: 20, values: vec![1.0, 1.5], valid_count: 2 },
            ],
        );
        assert!(good.is_ok());

        let bad_order = TrajectoryRecord::new(
            "map".into(),
            "synthetic".into(),
            MetricKind::Crps,
            vec![
                TrajectoryPoint { n: 20, values: vec![1.0, 2.0], valid_count: 2 },
                TrajectoryPoint { n: 10, values: vec![1.0, 1.5], valid_count: 2 },
            ],
        );
        assert!(bad_order.is_err());
    }

    #[test]
    fn r_prime_takes_first_values() {
        let record = TrajectoryRecord::new(
            "map".into(),
            "synthetic".into(),
            MetricKind::Crps,
            vec![TrajectoryPoint {
                n: 10,
                values: vec![1.0, 3.0, 100.0, 200.0],
                valid_count: 4,
            }],
        )
        .unwrap();
        let full = record.variances(None);
        let first_two = record.variances(Some(2));
        assert_eq!(first_two, vec![(10, 2.0)], "must use exactly the first R' values");
        assert_ne!(full, first_two);
        // Single-value cells drop out.
        let one = record.variances(Some(1));
        assert!(one.is_empty());
    }
}
