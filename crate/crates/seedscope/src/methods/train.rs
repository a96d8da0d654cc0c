//! Gradient-descent training for the direct-parameterization methods,
//! plus the restart and ensemble wrappers.

use super::{predict_map, InvalidRun, MethodConfig, MethodKind, TrainingSet};
use crate::nn::{adam_step, AdamState, DropoutMask, Gradients, LossKind, MlpParams, TrainScratch};
use crate::scoring::crps_gaussian;
use crate::seed::child_seed;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn loss_kind(config: &MethodConfig) -> LossKind {
    match config.kind {
        MethodKind::MapBetaNll => LossKind::BetaNll(config.beta),
        _ => LossKind::Nll,
    }
}

/// Core training loop: Adam on the selected loss over shuffled mini-batches
/// (full batch when the draw is smaller than the batch size). One dropout
/// mask per optimization step when a rate is set.
fn train_network(
    train: TrainingSet<'_>,
    loss: LossKind,
    dropout_rate: f64,
    epochs: usize,
    lr: f64,
    weight_decay: f64,
    batch_size: usize,
    seed: u64,
) -> Result<MlpParams, InvalidRun> {
    assert!(train.len() >= 2, "training needs at least 2 examples");
    let d = train.d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = MlpParams::init_with(d, &mut rng);
    let mut state = AdamState::new(d);
    let mut grads = Gradients::zeros(d);
    let mut scratch = TrainScratch::new();

    let n = train.len();
    let batch = batch_size.min(n).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut xb = vec![0.0; batch * d];
    let mut yb = vec![0.0; batch];

    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            for (slot, &i) in chunk.iter().enumerate() {
                xb[slot * d..(slot + 1) * d].copy_from_slice(train.row(i));
                yb[slot] = train.ys[i];
            }
            let mask = if dropout_rate > 0.0 {
                Some(DropoutMask::sample(dropout_rate, &mut rng))
            } else {
                None
            };
            let result = crate::nn::backward_into(
                &params,
                &xb[..chunk.len() * d],
                &yb[..chunk.len()],
                loss,
                mask.as_ref(),
                &mut grads,
                &mut scratch,
            );
            match result {
                Ok(_mean_loss) => adam_step(&mut params, &grads, &mut state, lr, weight_decay),
                Err(err) => return Err(InvalidRun::from_nn(epoch, err)),
            }
        }
    }
    Ok(params)
}

/// Train a single network by maximizing the (penalized) likelihood.
///
/// Uses the beta-NLL objective for `MapBetaNll` configs and keeps dropout
/// active for `McDropout` configs (rate 0 otherwise).
pub fn train_map(
    train: TrainingSet<'_>,
    config: &MethodConfig,
    seed: u64,
) -> Result<MlpParams, InvalidRun> {
    let dropout_rate = if config.kind == MethodKind::McDropout {
        config.dropout_rate
    } else {
        0.0
    };
    train_network(
        train,
        loss_kind(config),
        dropout_rate,
        config.epochs,
        config.lr,
        config.weight_decay,
        config.batch_size,
        seed,
    )
}

/// Mean single-Gaussian CRPS of a network on a subset of the training draw.
fn validation_crps(params: &MlpParams, train: TrainingSet<'_>, indices: &[usize]) -> f64 {
    let mut total = 0.0;
    for &i in indices {
        let dist = predict_map(params, train.row(i));
        let c = &dist.components()[0];
        total += crps_gaussian(c.mu, c.var.sqrt(), train.ys[i]);
    }
    total / indices.len() as f64
}

/// Outcome of a restarted training run, for diagnostics and tests.
#[derive(Debug, Clone)]
pub struct RestartOutcome {
    pub params: MlpParams,
    pub best_validation_crps: f64,
    /// Validation CRPS per restart; `None` marks an invalid restart.
    pub candidate_scores: Vec<Option<f64>>,
}

/// Train `restarts` independent runs (derived seeds; restart 0 uses the
/// given seed, so `restarts = 1` is bit-identical to [`train_map`]) and
/// return the run with the best validation CRPS.
///
/// The validation split is a deterministic 20% (`validation_frac`) of the
/// training draw, used only for selection; every restart trains on the
/// full draw and the test set stays untouched.
pub fn train_map_restarts_detailed(
    train: TrainingSet<'_>,
    config: &MethodConfig,
    seed: u64,
    restarts: usize,
) -> Result<RestartOutcome, InvalidRun> {
    assert!(restarts >= 1, "restarts must be >= 1");
    let n = train.len();
    let val_count = ((config.validation_frac * n as f64).round() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut val_rng = ChaCha8Rng::seed_from_u64(child_seed(seed, "val-split", 1));
    order.shuffle(&mut val_rng);
    let val_indices = &order[..val_count];

    let mut best: Option<(f64, MlpParams)> = None;
    let mut scores = Vec::with_capacity(restarts);
    let mut first_failure: Option<InvalidRun> = None;
    for k in 0..restarts {
        let restart_seed = child_seed(seed, "restart", k as u32);
        match train_map(train, config, restart_seed) {
            Ok(params) => {
                let score = validation_crps(&params, train, val_indices);
                scores.push(Some(score));
                let better = match &best {
                    None => true,
                    Some((best_score, _)) => score < *best_score,
                };
                if better {
                    best = Some((score, params));
                }
            }
            Err(err) => {
                scores.push(None);
                first_failure.get_or_insert(err);
            }
        }
    }
    match best {
        Some((score, params)) => Ok(RestartOutcome {
            params,
            best_validation_crps: score,
            candidate_scores: scores,
        }),
        None => {
            let first = first_failure.expect("restarts >= 1 implies at least one attempt");
            Err(InvalidRun {
                epoch: first.epoch,
                reason: format!("all {restarts} restarts invalid; first failure: {}", first.reason),
            })
        }
    }
}

/// As [`train_map_restarts_detailed`], returning only the selected network.
pub fn train_map_restarts(
    train: TrainingSet<'_>,
    config: &MethodConfig,
    seed: u64,
    restarts: usize,
) -> Result<MlpParams, InvalidRun> {
    train_map_restarts_detailed(train, config, seed, restarts).map(|o| o.params)
}

/// Train M independent networks with derived member seeds (member 0 uses
/// the given seed). Any invalid member invalidates the whole run.
pub fn train_ensemble(
    train: TrainingSet<'_>,
    config: &MethodConfig,
    seed: u64,
) -> Result<Vec<MlpParams>, InvalidRun> {
    assert!(config.ensemble_size >= 1, "ensemble size must be >= 1");
    (0..config.ensemble_size)
        .map(|k| train_map(train, config, child_seed(seed, "member", k as u32)))
        .collect()
}
