//! Test-time MC dropout prediction.

use super::{GaussianComponent, PredictiveDistribution};
use crate::nn::{forward, DropoutMask, MlpParams};
use crate::seed::child_seed;

/// Sample the T dropout masks for one evaluation. Mask `t` is derived from
/// `(eval_seed, t)` and shared across every test input, so each component
/// is one coherent subnetwork.
fn sample_masks(t_samples: usize, rate: f64, eval_seed: u64) -> Vec<DropoutMask> {
    (0..t_samples)
        .map(|t| DropoutMask::sample_from_seed(rate, child_seed(eval_seed, "mask", t as u32)))
        .collect()
}

/// K=T predictive mixture from stochastic forward passes on one input.
pub fn predict_mc_dropout(
    params: &MlpParams,
    x: &[f64],
    t_samples: usize,
    rate: f64,
    eval_seed: u64,
) -> PredictiveDistribution {
    assert!(t_samples >= 1, "need at least one stochastic pass");
    let masks = sample_masks(t_samples, rate, eval_seed);
    components_for(params, x, &masks)
}

/// Batch form: masks are sampled once and applied to every row.
pub fn predict_mc_dropout_batch(
    params: &MlpParams,
    xs: &[f64],
    t_samples: usize,
    rate: f64,
    eval_seed: u64,
) -> Vec<PredictiveDistribution> {
    assert!(t_samples >= 1, "need at least one stochastic pass");
    let masks = sample_masks(t_samples, rate, eval_seed);
    xs.chunks_exact(params.d)
        .map(|x| components_for(params, x, &masks))
        .collect()
}

fn components_for(params: &MlpParams, x: &[f64], masks: &[DropoutMask]) -> PredictiveDistribution {
    let components = masks
        .iter()
        .map(|mask| {
            let pred = forward(params, x, Some(mask)).expect("trained network must stay finite");
            GaussianComponent {
                mu: pred.mu,
                var: pred.var,
            }
        })
        .collect();
    PredictiveDistribution::new(components)
}
