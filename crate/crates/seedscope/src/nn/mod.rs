//! Fixed-architecture MLP with a heteroscedastic Gaussian head.
//!
//! Two ReLU hidden layers of width 64; the output layer produces the
//! predicted mean and raw log variance. Predicted variance is
//! `clamp(exp(logvar), 1e-3, 1e3)`. Backpropagation is analytic and
//! verified against central finite differences in the test suite.

mod adam;
mod backward;

pub use adam::{adam_step, AdamState};
pub use backward::{backward, Gradients, TrainScratch};
pub(crate) use backward::backward_into;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Hidden layer width, fixed by the shared architecture.
pub const HIDDEN: usize = 64;
/// Lower clamp on predicted variance.
pub const VAR_MIN: f64 = 1e-3;
/// Upper clamp on predicted variance.
pub const VAR_MAX: f64 = 1e3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NnError {
    #[error("non-finite activation in {layer}")]
    NonFinite { layer: &'static str },
}

/// All weights and biases of the MLP. Matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub d: usize,
    /// `HIDDEN x d`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `HIDDEN x HIDDEN`
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// `2 x HIDDEN`; row 0 feeds the mean, row 1 the log variance.
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

impl MlpParams {
    /// All-zero parameters (useful as a gradient/moment container).
    pub fn zeros(d: usize) -> Self {
        MlpParams {
            d,
            w1: vec![0.0; HIDDEN * d],
            b1: vec![0.0; HIDDEN],
            w2: vec![0.0; HIDDEN * HIDDEN],
            b2: vec![0.0; HIDDEN],
            w3: vec![0.0; 2 * HIDDEN],
            b3: vec![0.0; 2],
        }
    }

    /// He-uniform fan-in initialization for weights, zero biases.
    ///
    /// The zero log-variance bias makes the initial predicted variance 1,
    /// i.e. the prior noise level under standardized targets.
    pub fn init(d: usize, seed: u64) -> Self {
        Self::init_with(d, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// As [`MlpParams::init`], drawing from a caller-owned RNG so the
    /// stream can continue into the training loop.
    pub fn init_with(d: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut params = MlpParams::zeros(d);
        he_uniform(&mut params.w1, d, rng);
        he_uniform(&mut params.w2, HIDDEN, rng);
        he_uniform(&mut params.w3, HIDDEN, rng);
        params
    }

    pub fn n_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w3.len() + self.b3.len()
    }

    /// Parameter tensors in a fixed canonical order.
    pub fn tensors(&self) -> [&[f64]; 6] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 6] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ]
    }
}

fn he_uniform(weights: &mut [f64], fan_in: usize, rng: &mut ChaCha8Rng) {
    let limit = (6.0 / fan_in as f64).sqrt();
    for w in weights {
        *w = rng.gen_range(-limit..limit);
    }
}

/// Mean/variance output of one network evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPrediction {
    pub mu: f64,
    /// Clamped to `[VAR_MIN, VAR_MAX]`.
    pub var: f64,
}

/// Inverted-dropout keep masks for the two hidden layers.
///
/// Entries are `0` or `1/(1-rate)`, so the expected activation is
/// unchanged. One mask describes one sampled subnetwork; callers share it
/// across inputs to evaluate a coherent function.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub keep1: Vec<f64>,
    pub keep2: Vec<f64>,
    pub rate: f64,
}

impl DropoutMask {
    pub fn sample(rate: f64, rng: &mut ChaCha8Rng) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        let scale = 1.0 / (1.0 - rate);
        let mut draw = |_: usize| {
            if rng.gen::<f64>() < rate {
                0.0
            } else {
                scale
            }
        };
        DropoutMask {
            keep1: (0..HIDDEN).map(&mut draw).collect(),
            keep2: (0..HIDDEN).map(&mut draw).collect(),
            rate,
        }
    }

    pub fn sample_from_seed(rate: f64, seed: u64) -> Self {
        Self::sample(rate, &mut ChaCha8Rng::seed_from_u64(seed))
    }
}

/// Raw head outputs plus the clamped variance.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HeadOutput {
    pub mu: f64,
    pub var: f64,
    /// Clamp active: the log-variance path gets zero gradient.
    pub clamped: bool,
}

pub(crate) fn clamp_variance(logvar: f64) -> (f64, bool) {
    let raw = logvar.exp();
    if raw < VAR_MIN {
        (VAR_MIN, true)
    } else if raw > VAR_MAX {
        (VAR_MAX, true)
    } else {
        (raw, false)
    }
}

/// Evaluate hidden activations into caller-provided buffers.
///
/// `h1`/`h2` receive the post-ReLU, post-mask activations; `z1`/`z2` the
/// pre-activations (needed for backprop). Returns the head output.
pub(crate) fn forward_into(
    params: &MlpParams,
    x: &[f64],
    mask: Option<&DropoutMask>,
    z1: &mut [f64],
    h1: &mut [f64],
    z2: &mut [f64],
    h2: &mut [f64],
) -> HeadOutput {
    let d = params.d;
    debug_assert_eq!(x.len(), d);
    for u in 0..HIDDEN {
        let row = &params.w1[u * d..(u + 1) * d];
        let mut acc = params.b1[u];
        for (w, xi) in row.iter().zip(x) {
            acc += w * xi;
        }
        z1[u] = acc;
        let mut a = if acc > 0.0 { acc } else { 0.0 };
        if let Some(m) = mask {
            a *= m.keep1[u];
        }
        h1[u] = a;
    }
    for v in 0..HIDDEN {
        let row = &params.w2[v * HIDDEN..(v + 1) * HIDDEN];
        let mut acc = params.b2[v];
        for (w, hi) in row.iter().zip(h1.iter()) {
            acc += w * hi;
        }
        z2[v] = acc;
        let mut a = if acc > 0.0 { acc } else { 0.0 };
        if let Some(m) = mask {
            a *= m.keep2[v];
        }
        h2[v] = a;
    }
    let mut mu = params.b3[0];
    let mut logvar = params.b3[1];
    for v in 0..HIDDEN {
        mu += params.w3[v] * h2[v];
        logvar += params.w3[HIDDEN + v] * h2[v];
    }
    let (var, clamped) = clamp_variance(logvar);
    HeadOutput { mu, var, clamped }
}

/// Single-input forward pass with per-layer finiteness diagnostics.
pub fn forward(
    params: &MlpParams,
    x: &[f64],
    mask: Option<&DropoutMask>,
) -> Result<GaussianPrediction, NnError> {
    assert_eq!(x.len(), params.d, "input length must equal feature count");
    if x.iter().any(|v| !v.is_finite()) {
        return Err(NnError::NonFinite { layer: "input" });
    }
    let mut z1 = [0.0; HIDDEN];
    let mut h1 = [0.0; HIDDEN];
    let mut z2 = [0.0; HIDDEN];
    let mut h2 = [0.0; HIDDEN];
    let out = forward_into(params, x, mask, &mut z1, &mut h1, &mut z2, &mut h2);
    if z1.iter().any(|v| !v.is_finite()) {
        return Err(NnError::NonFinite { layer: "hidden1" });
    }
    if z2.iter().any(|v| !v.is_finite()) {
        return Err(NnError::NonFinite { layer: "hidden2" });
    }
    if !out.mu.is_finite() || !out.var.is_finite() {
        return Err(NnError::NonFinite { layer: "head" });
    }
    Ok(GaussianPrediction {
        mu: out.mu,
        var: out.var,
    })
}

/// Which training objective a run optimizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// Heteroscedastic Gaussian NLL without the additive constant:
    /// `1/2 log var + (y - mu)^2 / (2 var)`.
    Nll,
    /// NLL scaled by a gradient-detached `var^beta` factor.
    BetaNll(f64),
}

/// NLL loss value for one prediction.
pub fn nll_loss(pred: &GaussianPrediction, y: f64) -> f64 {
    let r = y - pred.mu;
    0.5 * pred.var.ln() + r * r / (2.0 * pred.var)
}

/// Beta-NLL loss value: `var^beta * nll`. The factor is treated as a
/// constant during differentiation, which changes gradients but not the
/// value identity `beta_nll = var^beta * nll`.
pub fn beta_nll_loss(pred: &GaussianPrediction, y: f64, beta: f64) -> f64 {
    assert!((0.0..=1.0).contains(&beta), "beta must be in [0, 1]");
    pred.var.powf(beta) * nll_loss(pred, y)
}

/// Loss value and head gradients `(dL/dmu, dL/dlogvar)` for one example.
///
/// The log-variance gradient is zero while the clamp is active.
pub(crate) fn head_loss_grad(out: &HeadOutput, y: f64, loss: LossKind) -> (f64, f64, f64) {
    let r = y - out.mu;
    let nll = 0.5 * out.var.ln() + r * r / (2.0 * out.var);
    let dmu_nll = -r / out.var;
    let dlv_nll = if out.clamped {
        0.0
    } else {
        0.5 - r * r / (2.0 * out.var)
    };
    match loss {
        LossKind::Nll => (nll, dmu_nll, dlv_nll),
        LossKind::BetaNll(beta) => {
            let factor = out.var.powf(beta);
            (factor * nll, factor * dmu_nll, factor * dlv_nll)
        }
    }
}
