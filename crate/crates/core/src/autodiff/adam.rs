//! Adam optimizer over a [`ParamStore`].

use indexmap::IndexMap;

use super::graph::{Gradients, ParamStore};
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates plus the shared step counter.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub step: u64,
    m: IndexMap<String, Tensor>,
    v: IndexMap<String, Tensor>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// One Adam update. Parameters without a gradient entry are left untouched;
/// the update is deterministic given the state.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
) {
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - cfg.beta1.powf(t);
    let bc2 = 1.0 - cfg.beta2.powf(t);
    for (name, grad) in &grads.params {
        let Some(p) = params.params.get_mut(name) else {
            continue;
        };
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(&p.shape));
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(&p.shape));
        for i in 0..p.numel() {
            let g = grad.data[i];
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * g;
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * g * g;
            let mhat = m.data[i] / bc1;
            let vhat = v.data[i] / bc2;
            p.data[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = ParamStore::new();
        params.insert("w", Tensor::new(vec![2], vec![1.5, -0.5]));
        let mut grads = Gradients::default();
        grads.params.insert("w".into(), Tensor::zeros(&[2]));
        let mut state = AdamState::new();
        adam_step(&mut params, &grads, &mut state, &AdamConfig::default());
        assert_eq!(params.get("w").unwrap().data, vec![1.5, -0.5]);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn constant_gradient_moves_opposite_sign() {
        let mut params = ParamStore::new();
        params.insert("w", Tensor::new(vec![2], vec![0.0, 0.0]));
        let mut state = AdamState::new();
        let cfg = AdamConfig::default();
        let mut grads = Gradients::default();
        grads
            .params
            .insert("w".into(), Tensor::new(vec![2], vec![3.0, -3.0]));
        for _ in 0..50 {
            adam_step(&mut params, &grads, &mut state, &cfg);
        }
        let w = params.get("w").unwrap();
        assert!(w.data[0] < 0.0, "positive grad must decrease param");
        assert!(w.data[1] > 0.0, "negative grad must increase param");
    }

    #[test]
    fn quadratic_bowl_converges() {
        // f(x, y) = (x - 0.7)^2 + (y + 0.3)^2, lr 1e-2, <= 2000 steps, tol 1e-3
        let mut params = ParamStore::new();
        params.insert("x", Tensor::new(vec![2], vec![2.0, -2.0]));
        let mut state = AdamState::new();
        let cfg = AdamConfig {
            learning_rate: 1e-2,
            ..AdamConfig::default()
        };
        let target = [0.7, -0.3];
        for _ in 0..2000 {
            let p = params.get("x").unwrap().clone();
            let mut grads = Gradients::default();
            grads.params.insert(
                "x".into(),
                Tensor::new(
                    vec![2],
                    vec![2.0 * (p.data[0] - target[0]), 2.0 * (p.data[1] - target[1])],
                ),
            );
            adam_step(&mut params, &grads, &mut state, &cfg);
        }
        let p = params.get("x").unwrap();
        assert!((p.data[0] - target[0]).abs() < 1e-3);
        assert!((p.data[1] - target[1]).abs() < 1e-3);
    }
}
