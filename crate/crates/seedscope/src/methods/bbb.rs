//! Bayes by backprop: mean-field Gaussian variational inference over the
//! MLP weights.
//!
//! Posterior scales are softplus-parameterized. Each optimization step
//! draws one weight sample via the reparameterization trick and minimizes
//! `mean NLL + kl_weight * KL(q || prior)` with Adam; the prior is
//! `N(0, prior_std^2)` and weight decay is omitted (the KL term already
//! regularizes).

use super::{GaussianComponent, InvalidRun, MethodConfig, PredictiveDistribution, TrainingSet};
use crate::nn::{adam_step, AdamState, Gradients, LossKind, MlpParams, TrainScratch};
use crate::seed::child_seed;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Posterior mean and raw (pre-softplus) scale per weight.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalParams {
    pub mean: MlpParams,
    pub rho: MlpParams,
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn softplus_inv(y: f64) -> f64 {
    assert!(y > 0.0);
    // ln(e^y - 1), stable for small y.
    y + (-(-y).exp_m1()).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl VariationalParams {
    /// He-uniform posterior means, constant initial posterior std.
    pub fn init(d: usize, init_posterior_std: f64, rng: &mut ChaCha8Rng) -> Self {
        let mean = MlpParams::init_with(d, rng);
        let mut rho = MlpParams::zeros(d);
        let raw = softplus_inv(init_posterior_std);
        for tensor in rho.tensors_mut() {
            tensor.iter_mut().for_each(|r| *r = raw);
        }
        VariationalParams { mean, rho }
    }

    /// Draw one full weight vector `w = mean + softplus(rho) * eps`,
    /// recording eps for the reparameterized gradient.
    fn sample_into(&self, rng: &mut ChaCha8Rng, weights: &mut MlpParams, eps: &mut MlpParams) {
        let w = weights.tensors_mut();
        let e = eps.tensors_mut();
        for ((wt, et), (mt, rt)) in w
            .into_iter()
            .zip(e)
            .zip(self.mean.tensors().into_iter().zip(self.rho.tensors()))
        {
            for i in 0..wt.len() {
                let z: f64 = rng.sample(StandardNormal);
                et[i] = z;
                wt[i] = mt[i] + softplus(rt[i]) * z;
            }
        }
    }

    /// Draw a weight sample without keeping eps (prediction path).
    pub fn sample_weights(&self, rng: &mut ChaCha8Rng) -> MlpParams {
        let mut weights = MlpParams::zeros(self.mean.d);
        let mut eps = MlpParams::zeros(self.mean.d);
        self.sample_into(rng, &mut weights, &mut eps);
        weights
    }
}

/// KL divergence between independent Gaussians `N(mu_i, std_i^2)` and a
/// shared prior `N(0, prior_std^2)`:
/// `sum_i log(prior/std_i) + (std_i^2 + mu_i^2) / (2 prior^2) - 1/2`.
pub fn kl_mean_field_gaussian(post_mu: &[f64], post_std: &[f64], prior_std: f64) -> f64 {
    assert_eq!(post_mu.len(), post_std.len());
    assert!(prior_std > 0.0, "prior std must be positive");
    let prior_var = prior_std * prior_std;
    post_mu
        .iter()
        .zip(post_std)
        .map(|(&mu, &std)| {
            debug_assert!(std > 0.0, "posterior std must be positive");
            (prior_std / std).ln() + (std * std + mu * mu) / (2.0 * prior_var) - 0.5
        })
        .sum()
}

/// Train the variational posterior. Deterministic given the seed; a
/// non-finite ELBO invalidates the run with its epoch index.
pub fn train_bbb(
    train: TrainingSet<'_>,
    config: &MethodConfig,
    seed: u64,
) -> Result<VariationalParams, InvalidRun> {
    assert!(train.len() >= 2, "training needs at least 2 examples");
    let d = train.d;
    let n = train.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vparams = VariationalParams::init(d, config.init_posterior_std, &mut rng);

    let mut adam_mean = AdamState::new(d);
    let mut adam_rho = AdamState::new(d);
    let mut weights = MlpParams::zeros(d);
    let mut eps = MlpParams::zeros(d);
    let mut nll_grads = Gradients::zeros(d);
    let mut mean_grads = Gradients::zeros(d);
    let mut rho_grads = Gradients::zeros(d);
    let mut scratch = TrainScratch::new();

    let kl_weight = config.kl_weight.value(n);
    let prior_var = config.prior_std * config.prior_std;
    let batch = config.batch_size.min(n).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut xb = vec![0.0; batch * d];
    let mut yb = vec![0.0; batch];

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            for (slot, &i) in chunk.iter().enumerate() {
                xb[slot * d..(slot + 1) * d].copy_from_slice(train.row(i));
                yb[slot] = train.ys[i];
            }
            vparams.sample_into(&mut rng, &mut weights, &mut eps);
            let mean_nll = crate::nn::backward_into(
                &weights,
                &xb[..chunk.len() * d],
                &yb[..chunk.len()],
                LossKind::Nll,
                None,
                &mut nll_grads,
                &mut scratch,
            )
            .map_err(|e| InvalidRun::from_nn(epoch, e))?;

            // KL value and the two gradient streams in one pass.
            let mut kl = 0.0;
            {
                let g_nll = nll_grads.tensors();
                let g_mean = mean_grads.tensors_mut();
                let g_rho = rho_grads.tensors_mut();
                let means = vparams.mean.tensors();
                let rhos = vparams.rho.tensors();
                let epss = eps.tensors();
                for t in 0..6 {
                    let (gm, gr) = (&mut *g_mean[t], &mut *g_rho[t]);
                    let (gn, mu, rho, ez) = (g_nll[t], means[t], rhos[t], epss[t]);
                    for i in 0..gm.len() {
                        let std = softplus(rho[i]);
                        kl += (config.prior_std / std).ln()
                            + (std * std + mu[i] * mu[i]) / (2.0 * prior_var)
                            - 0.5;
                        let dstd = sigmoid(rho[i]);
                        gm[i] = gn[i] + kl_weight * mu[i] / prior_var;
                        gr[i] = gn[i] * ez[i] * dstd
                            + kl_weight * (-1.0 / std + std / prior_var) * dstd;
                    }
                }
            }
            let elbo_loss = mean_nll + kl_weight * kl;
            if !elbo_loss.is_finite() {
                return Err(InvalidRun {
                    epoch,
                    reason: format!("non-finite ELBO ({elbo_loss})"),
                });
            }
            adam_step(&mut vparams.mean, &mean_grads, &mut adam_mean, config.lr, config.weight_decay);
            adam_step(&mut vparams.rho, &rho_grads, &mut adam_rho, config.lr, config.weight_decay);
        }
    }
    Ok(vparams)
}

/// K=T mixture from posterior weight samples on one input. Sample `t`
/// derives its seed from `(eval_seed, t)` and is shared across inputs.
pub fn predict_bbb(
    vparams: &VariationalParams,
    x: &[f64],
    t_samples: usize,
    eval_seed: u64,
) -> PredictiveDistribution {
    let batch = predict_bbb_batch(vparams, x, t_samples, eval_seed);
    batch.into_iter().next().expect("one input row")
}

/// Batch form: one weight sample per component, applied to every row.
pub fn predict_bbb_batch(
    vparams: &VariationalParams,
    xs: &[f64],
    t_samples: usize,
    eval_seed: u64,
) -> Vec<PredictiveDistribution> {
    assert!(t_samples >= 1, "need at least one posterior sample");
    let d = vparams.mean.d;
    assert_eq!(xs.len() % d, 0, "input shape mismatch");
    let rows = xs.len() / d;
    let mut per_row: Vec<Vec<GaussianComponent>> = vec![Vec::with_capacity(t_samples); rows];
    for t in 0..t_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(child_seed(eval_seed, "sample", t as u32));
        let weights = vparams.sample_weights(&mut rng);
        for (row, x) in xs.chunks_exact(d).enumerate() {
            let pred =
                crate::nn::forward(&weights, x, None).expect("sampled network must stay finite");
            per_row[row].push(GaussianComponent {
                mu: pred.mu,
                var: pred.var,
            });
        }
    }
    per_row.into_iter().map(PredictiveDistribution::new).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods::{predict_map, train_map, MethodKind};
    use crate::scoring::{mean_metric, MetricKind};

    #[test]
    fn kl_zero_when_posterior_equals_prior() {
        let mu = vec![0.0; 10];
        let std = vec![1.0; 10];
        assert!(kl_mean_field_gaussian(&mu, &std, 1.0).abs() < 1e-15);
    }

    #[test]
    fn kl_single_weight_closed_form() {
        // post N(1, 1), prior N(0, 1): KL = 0.5. Verified against numeric
        // quadrature of the KL integrand.
        let got = kl_mean_field_gaussian(&[1.0], &[1.0], 1.0);
        assert!((got - 0.5).abs() < 1e-12, "got {got}");

        // Quadrature oracle: Integral q(x) log(q(x)/p(x)) dx.
        let (post_mu, post_std, prior_std): (f64, f64, f64) = (0.7, 0.4, 1.3);
        let q = |x: f64| {
            (-0.5 * ((x - post_mu) / post_std).powi(2)).exp()
                / (post_std * (2.0 * std::f64::consts::PI).sqrt())
        };
        let p = |x: f64| {
            (-0.5 * (x / prior_std).powi(2)).exp()
                / (prior_std * (2.0 * std::f64::consts::PI).sqrt())
        };
        let steps = 400_000;
        let (lo, hi) = (post_mu - 12.0 * post_std, post_mu + 12.0 * post_std);
        let h = (hi - lo) / steps as f64;
        let mut integral = 0.0;
        for i in 0..=steps {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            let qx = q(x);
            if qx > 0.0 {
                integral += w * qx * (qx / p(x)).ln();
            }
        }
        integral *= h;
        let closed = kl_mean_field_gaussian(&[post_mu], &[post_std], prior_std);
        assert!(
            (closed - integral).abs() < 1e-6,
            "closed form {closed} vs quadrature {integral}"
        );
    }

    #[test]
    fn kl_nonnegative_for_random_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let mu: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let std: Vec<f64> = (0..5).map(|_| rng.gen_range(0.05..4.0)).collect();
            let prior = rng.gen_range(0.2..3.0);
            assert!(kl_mean_field_gaussian(&mu, &std, prior) >= -1e-12);
        }
    }

    #[test]
    fn softplus_round_trip() {
        for y in [0.01, 0.05, 1.0, 5.0] {
            assert!((softplus(softplus_inv(y)) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn training_is_bit_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| x * 0.5).collect();
        let train = TrainingSet::new(&xs, &ys, 1);
        let mut config = MethodConfig::defaults(MethodKind::Bbb, "bbb");
        config.epochs = 30;
        let a = train_bbb(train, &config, 123).unwrap();
        let b = train_bbb(train, &config, 123).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn near_zero_posterior_std_collapses_to_mean_network() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut vp = VariationalParams::init(2, 0.05, &mut rng);
        for tensor in vp.rho.tensors_mut() {
            tensor.iter_mut().for_each(|r| *r = -60.0); // std ~ 1e-26
        }
        let x = [0.3, -0.8];
        let dist = predict_bbb(&vp, &x, 10, 99);
        let want = predict_map(&vp.mean, &x);
        for c in dist.components() {
            assert!((c.mu - want.components()[0].mu).abs() < 1e-12);
            assert!((c.var - want.components()[0].var).abs() < 1e-12);
        }
    }

    #[test]
    fn prediction_is_deterministic_in_eval_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let vp = VariationalParams::init(2, 0.1, &mut rng);
        let x = [0.1, 0.9];
        assert_eq!(predict_bbb(&vp, &x, 15, 7), predict_bbb(&vp, &x, 15, 7));
        assert_ne!(predict_bbb(&vp, &x, 15, 7), predict_bbb(&vp, &x, 15, 8));
    }

    #[test]
    fn component_spread_grows_with_posterior_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let base = VariationalParams::init(3, 0.05, &mut rng);
        let mut wide = base.clone();
        for tensor in wide.rho.tensors_mut() {
            for r in tensor.iter_mut() {
                *r = softplus_inv(2.0 * softplus(*r));
            }
        }
        let x = [0.4, -0.2, 0.6];
        let spread = |vp: &VariationalParams| {
            let dist = predict_bbb(vp, &x, 50, 11);
            let mus: Vec<f64> = dist.components().iter().map(|c| c.mu).collect();
            let mean = mus.iter().sum::<f64>() / mus.len() as f64;
            mus.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / mus.len() as f64
        };
        assert!(
            spread(&wide) > spread(&base),
            "doubling posterior scale must widen the component means"
        );
    }

    #[test]
    fn linear_toy_recovers_slope_and_tracks_map_crps() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let count = 400;
        let noise = 0.1;
        let xs: Vec<f64> = (0..count).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| 2.0 * x + noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let train = TrainingSet::new(&xs, &ys, 1);

        let bbb_config = MethodConfig::defaults(MethodKind::Bbb, "bbb");
        let vp = train_bbb(train, &bbb_config, 17).unwrap();

        // Slope of the posterior predictive mean over a grid.
        let grid: Vec<f64> = (0..41).map(|i| -0.8 + 0.04 * i as f64).collect();
        let flat: Vec<f64> = grid.clone();
        let dists = predict_bbb_batch(&vp, &flat, 50, 3);
        let mean_at: Vec<f64> = dists
            .iter()
            .map(|d| d.components().iter().map(|c| c.mu).sum::<f64>() / d.k() as f64)
            .collect();
        let gx = grid.iter().sum::<f64>() / grid.len() as f64;
        let gy = mean_at.iter().sum::<f64>() / mean_at.len() as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, y) in grid.iter().zip(&mean_at) {
            num += (x - gx) * (y - gy);
            den += (x - gx) * (x - gx);
        }
        let slope = num / den;
        assert!((slope - 2.0).abs() < 0.1, "posterior mean slope {slope}");

        // Test CRPS within 2x of MAP's on held-out points.
        let test_xs: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let test_ys: Vec<f64> = test_xs
            .iter()
            .map(|&x| 2.0 * x + noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let map_config = MethodConfig::defaults(MethodKind::Map, "map");
        let map_params = train_map(train, &map_config, 17).unwrap();
        let map_dists: Vec<_> = test_xs.iter().map(|&x| predict_map(&map_params, &[x])).collect();
        let bbb_dists = predict_bbb_batch(&vp, &test_xs, 50, 5);
        let map_crps = mean_metric(&map_dists, &test_ys, MetricKind::Crps, 0.9).mean;
        let bbb_crps = mean_metric(&bbb_dists, &test_ys, MetricKind::Crps, 0.9).mean;
        assert!(
            bbb_crps <= 2.0 * map_crps,
            "BBB CRPS {bbb_crps} vs MAP CRPS {map_crps}"
        );
    }
}
