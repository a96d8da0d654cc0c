//! The uncertainty methods: MAP (with beta-NLL and restart variants),
//! deep ensembles, MC dropout, and Bayes by backprop.
//!
//! Every trainer and predictor is a pure function of (data, config, seed),
//! so any cell of the experiment grid reproduces bit-identically. Failed
//! runs are reported as [`InvalidRun`], never silently dropped.

mod bbb;
mod dropout;
mod train;

pub use bbb::{kl_mean_field_gaussian, predict_bbb, predict_bbb_batch, train_bbb, VariationalParams};
pub use dropout::{predict_mc_dropout, predict_mc_dropout_batch};
pub use train::{train_ensemble, train_map, train_map_restarts, train_map_restarts_detailed};

use crate::nn::{forward, MlpParams, NnError, VAR_MAX, VAR_MIN};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One Gaussian component of a predictive mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mu: f64,
    pub var: f64,
}

/// Uniform-weight mixture of Gaussians: K=1 for MAP, K=M for ensembles,
/// K=T for sampling methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    components: Vec<GaussianComponent>,
}

impl PredictiveDistribution {
    pub fn new(components: Vec<GaussianComponent>) -> Self {
        assert!(!components.is_empty(), "predictive mixture needs K >= 1");
        debug_assert!(
            components
                .iter()
                .all(|c| c.mu.is_finite() && (VAR_MIN..=VAR_MAX).contains(&c.var)),
            "component out of contract: {components:?}"
        );
        PredictiveDistribution { components }
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Uniform component weight 1/K.
    pub fn weight(&self) -> f64 {
        1.0 / self.components.len() as f64
    }
}

/// A training run that failed numerically. Recorded per cell, with the
/// epoch where the failure appeared.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid run at epoch {epoch}: {reason}")]
pub struct InvalidRun {
    pub epoch: usize,
    pub reason: String,
}

impl InvalidRun {
    pub(crate) fn from_nn(epoch: usize, err: NnError) -> Self {
        InvalidRun {
            epoch,
            reason: err.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Map,
    MapBetaNll,
    MapRestarts,
    Ensemble,
    McDropout,
    Bbb,
}

/// How the KL term is weighted in the BBB objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlWeight {
    /// `1 / |train|`, the full-batch-equivalent per-example weight.
    PerExample,
    /// A fixed weight, for sensitivity studies.
    Fixed(f64),
}

impl KlWeight {
    pub fn value(self, train_len: usize) -> f64 {
        match self {
            KlWeight::PerExample => 1.0 / train_len as f64,
            KlWeight::Fixed(w) => w,
        }
    }
}

/// Full hyperparameter record for one method entry in the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodConfig {
    pub name: String,
    pub kind: MethodKind,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Ensemble size M.
    pub ensemble_size: usize,
    /// Test-time sample count T for MC dropout and BBB.
    pub samples: usize,
    pub dropout_rate: f64,
    /// Beta-NLL exponent.
    pub beta: f64,
    pub restarts: usize,
    /// BBB prior scale.
    pub prior_std: f64,
    pub kl_weight: KlWeight,
    /// BBB initial posterior std (softplus-parameterized).
    pub init_posterior_std: f64,
    pub batch_size: usize,
    /// Fraction of the training draw used for restart selection.
    pub validation_frac: f64,
}

impl MethodConfig {
    /// Paper-default hyperparameters for a method kind: 500 epochs
    /// (BBB 1000), lr 1e-3, weight decay 1e-5 (BBB 0), M=5, T=50,
    /// beta=0.5.
    pub fn defaults(kind: MethodKind, name: impl Into<String>) -> Self {
        MethodConfig {
            name: name.into(),
            kind,
            epochs: if kind == MethodKind::Bbb { 1000 } else { 500 },
            lr: 1e-3,
            weight_decay: if kind == MethodKind::Bbb { 0.0 } else { 1e-5 },
            ensemble_size: 5,
            samples: 50,
            dropout_rate: if kind == MethodKind::McDropout { 0.1 } else { 0.0 },
            beta: 0.5,
            restarts: 5,
            prior_std: 1.0,
            kl_weight: KlWeight::PerExample,
            init_posterior_std: 0.05,
            batch_size: 32,
            validation_frac: 0.2,
        }
    }
}

/// Borrowed view of one standardized training draw, row-major features.
#[derive(Debug, Clone, Copy)]
pub struct TrainingSet<'a> {
    pub xs: &'a [f64],
    pub ys: &'a [f64],
    pub d: usize,
}

impl<'a> TrainingSet<'a> {
    pub fn new(xs: &'a [f64], ys: &'a [f64], d: usize) -> Self {
        assert_eq!(xs.len(), ys.len() * d, "training set shape mismatch");
        TrainingSet { xs, ys, d }
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.xs[i * self.d..(i + 1) * self.d]
    }
}

/// Single-network prediction as a K=1 mixture.
pub fn predict_map(params: &MlpParams, x: &[f64]) -> PredictiveDistribution {
    let pred = forward(params, x, None).expect("trained network must stay finite");
    PredictiveDistribution::new(vec![GaussianComponent {
        mu: pred.mu,
        var: pred.var,
    }])
}

/// Ensemble prediction: uniform K=M mixture over member networks.
pub fn predict_ensemble(members: &[MlpParams], x: &[f64]) -> PredictiveDistribution {
    assert!(!members.is_empty());
    let components = members
        .iter()
        .map(|p| {
            let pred = forward(p, x, None).expect("trained network must stay finite");
            GaussianComponent {
                mu: pred.mu,
                var: pred.var,
            }
        })
        .collect();
    PredictiveDistribution::new(components)
}

/// Train the configured method and predict on every test row.
///
/// This is the single entry point the experiment runner uses for a cell.
pub fn run_method(
    train: TrainingSet<'_>,
    test_xs: &[f64],
    config: &MethodConfig,
    train_seed: u64,
    eval_seed: u64,
) -> Result<Vec<PredictiveDistribution>, InvalidRun> {
    let d = train.d;
    assert_eq!(test_xs.len() % d, 0, "test feature shape mismatch");
    let rows: Vec<&[f64]> = test_xs.chunks_exact(d).collect();
    match config.kind {
        MethodKind::Map | MethodKind::MapBetaNll => {
            let params = train_map(train, config, train_seed)?;
            Ok(rows.iter().map(|x| predict_map(&params, x)).collect())
        }
        MethodKind::MapRestarts => {
            let params = train_map_restarts(train, config, train_seed, config.restarts)?;
            Ok(rows.iter().map(|x| predict_map(&params, x)).collect())
        }
        MethodKind::Ensemble => {
            let members = train_ensemble(train, config, train_seed)?;
            Ok(rows.iter().map(|x| predict_ensemble(&members, x)).collect())
        }
        MethodKind::McDropout => {
            let params = train_map(train, config, train_seed)?;
            Ok(predict_mc_dropout_batch(
                &params,
                test_xs,
                config.samples,
                config.dropout_rate,
                eval_seed,
            ))
        }
        MethodKind::Bbb => {
            let vparams = train_bbb(train, config, train_seed)?;
            Ok(predict_bbb_batch(&vparams, test_xs, config.samples, eval_seed))
        }
    }
}
