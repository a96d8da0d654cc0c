//! Analytic backpropagation through the fixed architecture.

use super::{forward_into, head_loss_grad, DropoutMask, LossKind, MlpParams, NnError, HIDDEN};

/// Parameter-shaped gradient accumulator.
pub type Gradients = MlpParams;

/// Reusable buffers for one training run; avoids per-step allocation.
#[derive(Debug, Clone)]
pub struct TrainScratch {
    z1: Vec<f64>,
    h1: Vec<f64>,
    z2: Vec<f64>,
    h2: Vec<f64>,
    dz1: Vec<f64>,
    dh1: Vec<f64>,
    dz2: Vec<f64>,
}

impl TrainScratch {
    pub fn new() -> Self {
        TrainScratch {
            z1: vec![0.0; HIDDEN],
            h1: vec![0.0; HIDDEN],
            z2: vec![0.0; HIDDEN],
            h2: vec![0.0; HIDDEN],
            dz1: vec![0.0; HIDDEN],
            dh1: vec![0.0; HIDDEN],
            dz2: vec![0.0; HIDDEN],
        }
    }
}

impl Default for TrainScratch {
    fn default() -> Self {
        Self::new()
    }
}

/// Mean-over-batch gradients of the selected loss, plus the mean loss.
///
/// `xs` is row-major `batch x d`. The dropout mask, when present, is shared
/// across the whole batch (one subnetwork per optimization step). A
/// non-finite loss or gradient is reported, never silently propagated.
pub fn backward(
    params: &MlpParams,
    xs: &[f64],
    ys: &[f64],
    loss: LossKind,
    mask: Option<&DropoutMask>,
) -> Result<(Gradients, f64), NnError> {
    let mut grads = Gradients::zeros(params.d);
    let mut scratch = TrainScratch::new();
    let mean_loss = backward_into(params, xs, ys, loss, mask, &mut grads, &mut scratch)?;
    Ok((grads, mean_loss))
}

/// As [`backward`], accumulating into caller-owned gradient storage.
/// `grads` is zeroed first.
pub(crate) fn backward_into(
    params: &MlpParams,
    xs: &[f64],
    ys: &[f64],
    loss: LossKind,
    mask: Option<&DropoutMask>,
    grads: &mut Gradients,
    scratch: &mut TrainScratch,
) -> Result<f64, NnError> {
    let d = params.d;
    let batch = ys.len();
    assert!(batch > 0, "backward requires a non-empty batch");
    assert_eq!(xs.len(), batch * d, "batch feature shape mismatch");

    for tensor in grads.tensors_mut() {
        tensor.iter_mut().for_each(|g| *g = 0.0);
    }

    let mut loss_sum = 0.0;
    for (x, &y) in xs.chunks_exact(d).zip(ys) {
        let out = forward_into(
            params,
            x,
            mask,
            &mut scratch.z1,
            &mut scratch.h1,
            &mut scratch.z2,
            &mut scratch.h2,
        );
        let (loss_value, dmu, dlv) = head_loss_grad(&out, y, loss);
        loss_sum += loss_value;

        // Head layer.
        grads.b3[0] += dmu;
        grads.b3[1] += dlv;
        for v in 0..HIDDEN {
            let h = scratch.h2[v];
            grads.w3[v] += dmu * h;
            grads.w3[HIDDEN + v] += dlv * h;
        }

        // Gradient w.r.t. the post-mask second hidden activation, then
        // through mask and ReLU.
        for v in 0..HIDDEN {
            let dh2 = dmu * params.w3[v] + dlv * params.w3[HIDDEN + v];
            let keep = mask.map_or(1.0, |m| m.keep2[v]);
            scratch.dz2[v] = if scratch.z2[v] > 0.0 { dh2 * keep } else { 0.0 };
        }

        // Second layer parameters and backprop to the first activation.
        scratch.dh1.iter_mut().for_each(|g| *g = 0.0);
        for v in 0..HIDDEN {
            let delta = scratch.dz2[v];
            grads.b2[v] += delta;
            if delta != 0.0 {
                let w_row = &params.w2[v * HIDDEN..(v + 1) * HIDDEN];
                let g_row = &mut grads.w2[v * HIDDEN..(v + 1) * HIDDEN];
                for u in 0..HIDDEN {
                    g_row[u] += delta * scratch.h1[u];
                    scratch.dh1[u] += delta * w_row[u];
                }
            }
        }

        // Through the first mask/ReLU and into the input layer.
        for u in 0..HIDDEN {
            let keep = mask.map_or(1.0, |m| m.keep1[u]);
            scratch.dz1[u] = if scratch.z1[u] > 0.0 { scratch.dh1[u] * keep } else { 0.0 };
        }
        for u in 0..HIDDEN {
            let delta = scratch.dz1[u];
            grads.b1[u] += delta;
            if delta != 0.0 {
                let g_row = &mut grads.w1[u * d..(u + 1) * d];
                for (g, xi) in g_row.iter_mut().zip(x) {
                    *g += delta * xi;
                }
            }
        }
    }

    let inv = 1.0 / batch as f64;
    let mut magnitude = 0.0;
    for tensor in grads.tensors_mut() {
        for g in tensor.iter_mut() {
            *g *= inv;
            magnitude += g.abs();
        }
    }
    let mean_loss = loss_sum * inv;
    if !magnitude.is_finite() {
        return Err(NnError::NonFinite { layer: "gradient" });
    }
    if !mean_loss.is_finite() {
        return Err(NnError::NonFinite { layer: "loss" });
    }
    Ok(mean_loss)
}
