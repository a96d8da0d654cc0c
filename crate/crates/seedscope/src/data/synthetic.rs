//! Synthetic heteroscedastic regression data.
//!
//! Inputs are uniform on `[-1, 1]^d`. The mean response is a smooth
//! nonlinear function of the first six coordinates and the noise scale
//! depends on the fifth coordinate, so the conditional target variance
//! rises monotonically with `x[4]`:
//!
//! ```text
//! f(x)     = sin(3 x1) + x2^2 + 0.5 x3 x4 + 0.3 x6
//! sigma(x) = 0.1 + 0.4 / (1 + exp(-2 x5))
//! y        = f(x) + sigma(x) * eps,   eps ~ N(0, 1)
//! ```

use crate::data::RegressionDataset;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Mean response. Coordinates beyond the sixth are inert noise dimensions.
pub(crate) fn mean_response(x: &[f64]) -> f64 {
    (3.0 * x[0]).sin() + x[1] * x[1] + 0.5 * x[2] * x[3] + 0.3 * x[5]
}

/// Input-dependent noise scale, increasing in `x[4]`.
pub(crate) fn noise_scale(x: &[f64]) -> f64 {
    0.1 + 0.4 * logistic(2.0 * x[4])
}

/// Generate `count` samples of the heteroscedastic generator with `d >= 6`
/// features. Deterministic given the seed.
pub fn generate_synthetic(seed: u64, count: usize, d: usize) -> RegressionDataset {
    assert!(d >= 6, "synthetic generator needs d >= 6, got {d}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(count * d);
    let mut targets = Vec::with_capacity(count);
    let mut x = vec![0.0; d];
    for _ in 0..count {
        for xi in &mut x {
            *xi = rng.gen_range(-1.0..1.0);
        }
        let eps: f64 = rng.sample(StandardNormal);
        targets.push(mean_response(&x) + noise_scale(&x) * eps);
        features.extend_from_slice(&x);
    }
    RegressionDataset::new("synthetic".into(), features, targets, d)
        .expect("generator output is finite by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dataset_keeps_dimension() {
        let ds = generate_synthetic(7, 0, 8);
        assert_eq!(ds.rows(), 0);
        assert_eq!(ds.dim(), 8);
    }

    #[test]
    fn generation_is_bit_deterministic() {
        let a = generate_synthetic(7, 5000, 8);
        let b = generate_synthetic(7, 5000, 8);
        assert_eq!(a, b);
    }

    #[test]
    fn default_scale_matches_registry() {
        let ds = generate_synthetic(7, 5000, 8);
        assert_eq!(ds.rows(), 5000);
        assert_eq!(ds.dim(), 8);
    }

    /// Conditional variance of y within a set of rows selected by x[4].
    fn conditional_variance(ds: &RegressionDataset, keep: impl Fn(f64) -> bool) -> (f64, usize) {
        let selected: Vec<f64> = (0..ds.rows())
            .filter(|&i| keep(ds.row(i)[4]))
            .map(|i| ds.target(i))
            .collect();
        let n = selected.len();
        let mean = selected.iter().sum::<f64>() / n as f64;
        let var = selected.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
        (var, n)
    }

    #[test]
    fn noise_grows_with_fifth_coordinate() {
        let ds = generate_synthetic(123, 100_000, 8);
        let (high, n_high) = conditional_variance(&ds, |x5| x5 > 0.5);
        let (low, n_low) = conditional_variance(&ds, |x5| x5 < -0.5);
        assert!(n_high > 20_000 && n_low > 20_000);
        assert!(
            high > low,
            "Var[y | x5 > 0.5] = {high} should exceed Var[y | x5 < -0.5] = {low}"
        );
    }

    #[test]
    fn bucket_variances_increase_monotonically() {
        // Five equal-width buckets of x[4]; the conditional variance
        // estimates must be increasing up to 3-sigma Monte-Carlo noise on
        // each bucket's variance-of-variance.
        let ds = generate_synthetic(99, 100_000, 8);
        let mut stats = Vec::new();
        for b in 0..5 {
            let lo = -1.0 + 0.4 * b as f64;
            let hi = lo + 0.4;
            let ys: Vec<f64> = (0..ds.rows())
                .filter(|&i| {
                    let x5 = ds.row(i)[4];
                    x5 >= lo && x5 < hi
                })
                .map(|i| ds.target(i))
                .collect();
            let n = ys.len() as f64;
            let mean = ys.iter().sum::<f64>() / n;
            let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
            let fourth = ys.iter().map(|y| (y - mean).powi(4)).sum::<f64>() / n;
            // Var[s^2] ~ (mu4 - sigma^4) / n for the sample variance.
            let se = ((fourth - var * var) / n).max(0.0).sqrt();
            stats.push((var, se));
        }
        for w in stats.windows(2) {
            let (v_lo, se_lo) = w[0];
            let (v_hi, se_hi) = w[1];
            let se = (se_lo * se_lo + se_hi * se_hi).sqrt();
            assert!(
                v_hi > v_lo - 3.0 * se,
                "bucket variance dropped beyond noise: {v_lo} -> {v_hi} (se {se})"
            );
        }
        // The overall trend must be unmistakable regardless of noise.
        assert!(stats[4].0 > stats[0].0);
    }
}
