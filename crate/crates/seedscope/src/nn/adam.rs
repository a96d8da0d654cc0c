//! Adam with decoupled weight decay.

use super::{Gradients, MlpParams};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment accumulators plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
    pub t: u64,
}

impl AdamState {
    pub fn new(d: usize) -> Self {
        AdamState {
            m: Gradients::zeros(d),
            v: Gradients::zeros(d),
            t: 0,
        }
    }
}

/// One Adam step with bias correction. Decoupled weight decay shrinks the
/// parameters by `lr * weight_decay` before the moment update, so the decay
/// composes identically across loss kinds.
pub fn adam_step(
    params: &mut MlpParams,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) {
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    let decay = 1.0 - lr * weight_decay;

    let p = params.tensors_mut();
    let g = grads.tensors();
    let m = state.m.tensors_mut();
    let v = state.v.tensors_mut();
    for (((pt, gt), mt), vt) in p.into_iter().zip(g).zip(m).zip(v) {
        adam_update_slice(pt, gt, mt, vt, lr, decay, bc1, bc2);
    }
}

pub(crate) fn adam_update_slice(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    decay: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..params.len() {
        if decay != 1.0 {
            params[i] *= decay;
        }
        let g = grads[i];
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        // Hand-computed first Adam step: m_hat = v_hat = g= 1, so the
        // update is -lr / (1 + eps).
        let mut p = [0.0];
        let mut m = [0.0];
        let mut v = [0.0];
        adam_update_slice(&mut p, &[1.0], &mut m, &mut v, 1e-3, 1.0, 1.0 - ADAM_BETA1.powi(1), 1.0 - ADAM_BETA2.powi(1));
        let want = -1e-3 / (1.0 + ADAM_EPS);
        assert!((p[0] - want).abs() < 1e-12, "{} vs {want}", p[0]);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = MlpParams::init(3, 1);
        let before = params.clone();
        let grads = Gradients::zeros(3);
        let mut state = AdamState::new(3);
        adam_step(&mut params, &grads, &mut state, 1e-3, 0.0);
        assert_eq!(params, before);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn decay_only_step_scales_params() {
        let mut params = MlpParams::init(3, 2);
        let before = params.clone();
        let grads = Gradients::zeros(3);
        let mut state = AdamState::new(3);
        let (lr, wd) = (1e-3, 1e-5);
        adam_step(&mut params, &grads, &mut state, lr, wd);
        let factor = 1.0 - lr * wd;
        for (got, want) in params.tensors().iter().zip(before.tensors().iter()) {
            for (g, w) in got.iter().zip(want.iter()) {
                assert!((g - w * factor).abs() < 1e-18, "{g} vs {}", w * factor);
            }
        }
    }

    #[test]
    fn moments_track_gradient_statistics() {
        let mut p = [0.0];
        let mut m = [0.0];
        let mut v = [0.0];
        let g = 0.5;
        adam_update_slice(&mut p, &[g], &mut m, &mut v, 1e-3, 1.0, 0.1, 0.001);
        assert!((m[0] - (1.0 - ADAM_BETA1) * g).abs() < 1e-15);
        assert!((v[0] - (1.0 - ADAM_BETA2) * g * g).abs() < 1e-15);
    }
}
