//! Adam with the standard constants (β₁ = 0.9, β₂ = 0.999, ε = 1e-8), bias
//! correction and no weight decay. State tensors mirror the parameter tree;
//! a group filter lets a stage update only its own parameters while the
//! rest stay bitwise frozen.

use crate::model::{EncoderParams, Gradients, ParamGroup};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct AdamState {
    m: EncoderParams,
    v: EncoderParams,
    step: u64,
}

impl AdamState {
    pub fn new(params: &EncoderParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update over every parameter tensor.
pub fn adam_step(params: &mut EncoderParams, grads: &Gradients, state: &mut AdamState, lr: f64) {
    adam_step_filtered(params, grads, state, lr, |_| true)
}

/// One Adam update restricted to parameter groups accepted by `update`.
/// Filtered-out tensors keep their parameter *and* moment bytes untouched.
pub fn adam_step_filtered(
    params: &mut EncoderParams,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
    update: impl Fn(ParamGroup) -> bool,
) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);

    let mut p = params.tensors_mut();
    let g = grads.tensors();
    let mut m = state.m.tensors_mut();
    let mut v = state.v.tensors_mut();
    assert_eq!(p.len(), g.len(), "gradient tree must mirror parameters");

    for idx in 0..p.len() {
        let (group, pt) = &mut p[idx];
        if !update(*group) {
            continue;
        }
        let (_, gt) = &g[idx];
        let (_, mt) = &mut m[idx];
        let (_, vt) = &mut v[idx];
        assert_eq!(pt.len(), gt.len(), "tensor {idx} shape");
        for k in 0..pt.len() {
            let grad = gt[k];
            mt[k] = BETA1 * mt[k] + (1.0 - BETA1) * grad;
            vt[k] = BETA2 * vt[k] + (1.0 - BETA2) * grad * grad;
            let m_hat = mt[k] / bc1;
            let v_hat = vt[k] / bc2;
            pt[k] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_params, ArchConfig};
    use crate::numerics::SeededRng;

    fn params() -> EncoderParams {
        let arch = ArchConfig {
            obs_dim: 4,
            trunk_layers: vec![5, 6],
            shared_depth: 1,
            main_head_layers: vec![4, 3],
            wcvl_head_layers: vec![4, 3],
        };
        init_params(&arch, 7, &mut SeededRng::new(1)).unwrap()
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = params();
        let before = p.clone();
        let grads = p.zeros_like();
        let mut state = AdamState::new(&p);
        adam_step(&mut p, &grads, &mut state, 1e-3);
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = params();
        let before = p.flat();
        let mut grads = p.zeros_like();
        // Put a visible gradient on every tensor entry.
        for (_, t) in grads.tensors_mut() {
            for (k, v) in t.iter_mut().enumerate() {
                *v = if k % 2 == 0 { 0.5 } else { -2.0 };
            }
        }
        let mut state = AdamState::new(&p);
        let lr = 1e-3;
        adam_step(&mut p, &grads, &mut state, lr);
        let after = p.flat();
        let gflat = grads.flat();
        // Bias-corrected first step: m̂ = g, v̂ = g², so Δ = -lr·g/(|g|+ε) ≈ -lr·sign(g).
        for ((b, a), g) in before.iter().zip(&after).zip(&gflat) {
            let delta = a - b;
            let expected = -lr * g / (g.abs() + EPSILON);
            assert!((delta - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_runs_produce_identical_states() {
        let run = || {
            let mut p = params();
            let mut state = AdamState::new(&p);
            let mut rng = SeededRng::new(5);
            for _ in 0..10 {
                let mut grads = p.zeros_like();
                for (_, t) in grads.tensors_mut() {
                    for v in t.iter_mut() {
                        *v = rng.uniform(-1.0, 1.0);
                    }
                }
                adam_step(&mut p, &grads, &mut state, 1e-3);
            }
            (p.flat(), state.m.flat(), state.v.flat(), state.step)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn filtered_step_freezes_excluded_groups() {
        let mut p = params();
        let before = p.clone();
        let mut grads = p.zeros_like();
        for (_, t) in grads.tensors_mut() {
            for v in t.iter_mut() {
                *v = 1.0;
            }
        }
        let mut state = AdamState::new(&p);
        adam_step_filtered(&mut p, &grads, &mut state, 1e-3, ParamGroup::in_wcvl_stage);
        // Main-module tensors identical down to the bit.
        assert_eq!(p.trunk, before.trunk);
        assert_eq!(p.main_head, before.main_head);
        assert_eq!(p.classifier, before.classifier);
        // Cross-view tensors moved.
        assert_ne!(p.wcvl_head, before.wcvl_head);
        assert_ne!(p.wcvl_trunk_tail, before.wcvl_trunk_tail);
    }
}
