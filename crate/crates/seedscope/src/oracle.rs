//! Independent oracles for the self-test and acceptance suites.
//!
//! Everything here deliberately avoids the implementation paths it checks:
//! CRPS by Monte-Carlo sampling instead of the closed form, gradients by
//! central finite differences instead of backprop, the single-seed summary
//! by literal with-replacement resampling instead of the closed form, and
//! rank-test p-values by exhaustive permutation.

use crate::methods::PredictiveDistribution;
use crate::nn::{forward, nll_loss, DropoutMask, LossKind, MlpParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Monte-Carlo CRPS estimate `E|X - y| - 1/2 E|X - X'|` with its standard
/// error, using `samples` independent draws of the pair (X, X').
pub fn mc_crps(dist: &PredictiveDistribution, y: f64, samples: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps = dist.components();
    let k = comps.len();
    let mut draw = |rng: &mut ChaCha8Rng| -> f64 {
        let c = &comps[rng.gen_range(0..k)];
        c.mu + c.var.sqrt() * rng.sample::<f64, _>(StandardNormal)
    };
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let x = draw(&mut rng);
        let x2 = draw(&mut rng);
        let stat = (x - y).abs() - 0.5 * (x - x2).abs();
        sum += stat;
        sum_sq += stat * stat;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}

/// Central finite-difference gradient of the mean batch loss w.r.t. every
/// parameter. For beta-NLL the detached `var^beta` factor is frozen at the
/// base parameters, matching the defined gradient semantics.
pub fn finite_difference_gradients(
    params: &MlpParams,
    xs: &[f64],
    ys: &[f64],
    loss: LossKind,
    mask: Option<&DropoutMask>,
    h: f64,
) -> MlpParams {
    let d = params.d;
    let base_factors: Vec<f64> = match loss {
        LossKind::Nll => vec![1.0; ys.len()],
        LossKind::BetaNll(beta) => xs
            .chunks_exact(d)
            .map(|x| forward(params, x, mask).expect("finite").var.powf(beta))
            .collect(),
    };
    let eval = |p: &MlpParams| -> f64 {
        let mut total = 0.0;
        for ((x, &y), factor) in xs.chunks_exact(d).zip(ys).zip(&base_factors) {
            let pred = forward(p, x, mask).expect("finite");
            total += factor * nll_loss(&pred, y);
        }
        total / ys.len() as f64
    };

    let mut grads = MlpParams::zeros(d);
    for t in 0..6 {
        for i in 0..params.tensors()[t].len() {
            let mut plus = params.clone();
            plus.tensors_mut()[t][i] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[t][i] -= h;
            grads.tensors_mut()[t][i] = (eval(&plus) - eval(&minus)) / (2.0 * h);
        }
    }
    grads
}

/// Literal single-seed resampling protocol: draw one run with replacement
/// `draws` times, return (rel-RMSE, P(+-10%)) of the relative error.
pub fn resampled_single_seed_summary(values: &[f64], draws: usize, seed: u64) -> (f64, f64) {
    assert!(values.len() >= 2);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    assert!(mean > 0.0, "relative measures need a positive mean");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sq = 0.0;
    let mut within = 0usize;
    for _ in 0..draws {
        let pick = values[rng.gen_range(0..values.len())];
        let rel = (pick - mean) / mean;
        sq += rel * rel;
        if rel.abs() <= 0.1 {
            within += 1;
        }
    }
    ((sq / draws as f64).sqrt(), within as f64 / draws as f64)
}

/// Exact one-sided Mann-Whitney p-value by enumerating every split of the
/// pooled sample into |a| and |b| groups: the fraction of splits whose U
/// statistic is at least the observed one (midrank convention for ties,
/// point probability halved for continuity with the observed value).
pub fn exact_mann_whitney_one_sided(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let na = a.len();
    assert!(n <= 20, "exhaustive enumeration is exponential; keep n <= 20");

    let u_of = |indices: &[usize]| -> f64 {
        // U = sum of ranks of group A minus na(na+1)/2, average ranks.
        let ranks = average_ranks(&pooled);
        let rank_sum: f64 = indices.iter().map(|&i| ranks[i]).sum();
        rank_sum - (na * (na + 1)) as f64 / 2.0
    };
    let observed = u_of(&(0..na).collect::<Vec<_>>());

    let mut at_least = 0usize;
    let mut equal = 0usize;
    let mut total = 0usize;
    let mut selection: Vec<usize> = (0..na).collect();
    loop {
        let u = u_of(&selection);
        total += 1;
        if u > observed + 1e-9 {
            at_least += 1;
        } else if (u - observed).abs() <= 1e-9 {
            equal += 1;
        }
        // Next combination in lexicographic order.
        let mut i = na;
        loop {
            if i == 0 {
                return (at_least as f64 + 0.5 * equal as f64) / total as f64;
            }
            i -= 1;
            if selection[i] != i + n - na {
                selection[i] += 1;
                for j in (i + 1)..na {
                    selection[j] = selection[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Exact two-sided Spearman p-value by enumerating all permutations of one
/// input (k <= 8): the fraction of permutations with |rho| at least the
/// observed |rho|.
pub fn exact_spearman_two_sided(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let k = x.len();
    assert!(k <= 8, "exhaustive permutation p is k!; keep k <= 8");
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let rho = |perm: &[usize]| -> f64 {
        let mean = (k + 1) as f64 / 2.0;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for i in 0..k {
            let a = rx[i] - mean;
            let b = ry[perm[i]] - mean;
            sxy += a * b;
            sxx += a * a;
            syy += b * b;
        }
        sxy / (sxx * syy).sqrt()
    };
    let identity: Vec<usize> = (0..k).collect();
    let observed = rho(&identity).abs();

    let mut perm = identity;
    let mut count = 0usize;
    let mut total = 0usize;
    loop {
        if rho(&perm).abs() >= observed - 1e-12 {
            count += 1;
        }
        total += 1;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    count as f64 / total as f64
}

fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("NaN"));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        i = j;
    }
    ranks
}
