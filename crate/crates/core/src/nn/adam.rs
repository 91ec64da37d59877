use serde::{Deserialize, Serialize};

use super::params::{ParamLayout, ParamVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam optimizer with bias-corrected moment estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    layout: ParamLayout,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    steps: u64,
}

impl Adam {
    pub fn new(layout: &ParamLayout) -> Self {
        Self::with_config(layout, AdamConfig::default())
    }

    pub fn with_config(layout: &ParamLayout, config: AdamConfig) -> Self {
        let len = layout.total_len();
        Self {
            config,
            layout: layout.clone(),
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut ParamVector, grads: &ParamVector, lr: f64) -> Result<()> {
        params.ensure_same_layout(grads)?;
        if params.layout() != &self.layout {
            return Err(Error::Layout("optimizer state belongs to a different layout".into()));
        }
        let AdamConfig { beta1, beta2, eps } = self.config;
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let iter = params
            .values_mut()
            .iter_mut()
            .zip(grads.values())
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()));
        for ((p, &g), (m, v)) in iter {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Functional form of [`Adam::step`].
pub fn adam_step(params: &ParamVector, grads: &ParamVector, state: &mut Adam, lr: f64) -> Result<ParamVector> {
    let mut updated = params.clone();
    state.step(&mut updated, grads, lr)?;
    Ok(updated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::LayoutEntry;

    fn layout(n: usize) -> ParamLayout {
        ParamLayout::new(vec![LayoutEntry {
            layer_index: 0,
            offset: 0,
            len: n,
            weight_len: n,
        }])
    }

    fn vector(values: Vec<f64>) -> ParamVector {
        let n = values.len();
        ParamVector::new(values, layout(n)).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut adam = Adam::new(&layout(2));
        let p0 = vector(vec![0.5, -1.5]);
        let p1 = adam_step(&p0, &vector(vec![1.0, -2.0]), &mut adam, 1e-3).unwrap();
        let (m_before, v_before) = (adam.first_moment().to_vec(), adam.second_moment().to_vec());
        let p2 = adam_step(&p1, &vector(vec![0.0, 0.0]), &mut adam, 1e-3).unwrap();
        // The bias-corrected first moment is still nonzero, so only a fresh state stays put.
        assert_ne!(p1, p2);
        for i in 0..2 {
            assert!(adam.first_moment()[i].abs() < m_before[i].abs());
            assert!(adam.second_moment()[i] < v_before[i]);
        }

        let mut fresh = Adam::new(&layout(2));
        let p3 = adam_step(&p0, &vector(vec![0.0, 0.0]), &mut fresh, 1e-3).unwrap();
        assert_eq!(p3, p0);
        assert_eq!(fresh.first_moment(), &[0.0, 0.0]);
    }

    #[test]
    fn single_step_matches_scalar_hand_computation() {
        let (lr, g) = (0.01, 0.3_f64);
        // m = 0.1 g, v = 0.001 g^2; corrected: m_hat = g, v_hat = g^2.
        let m_hat = (0.1 * g) / (1.0 - 0.9);
        let v_hat = (0.001 * g * g) / (1.0 - 0.999);
        let expected = 2.0 - lr * m_hat / (v_hat.sqrt() + 1e-8);
        let mut adam = Adam::new(&layout(1));
        let p = adam_step(&vector(vec![2.0]), &vector(vec![g]), &mut adam, lr).unwrap();
        assert!((p.values()[0] - expected).abs() < 1e-15);
        assert!((p.values()[0] - (2.0 - lr * g / (g + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_step_converges_to_lr() {
        let lr = 1e-3;
        let mut adam = Adam::new(&layout(3));
        let grads = vector(vec![4.0, -0.02, 1e-3]);
        let mut p = vector(vec![0.0; 3]);
        let mut last = p.clone();
        for _ in 0..1000 {
            last = p.clone();
            adam.step(&mut p, &grads, lr).unwrap();
        }
        for i in 0..3 {
            let delta = (p.values()[i] - last.values()[i]).abs();
            assert!((delta - lr).abs() / lr < 0.01, "param {i}: step {delta}");
        }
    }

    #[test]
    fn layout_mismatch_is_an_error() {
        let mut adam = Adam::new(&layout(2));
        let mut p = vector(vec![0.0; 2]);
        assert!(adam.step(&mut p, &vector(vec![0.0; 3]), 0.1).is_err());
        let mut q = vector(vec![0.0; 3]);
        assert!(adam.step(&mut q, &vector(vec![0.0; 3]), 0.1).is_err());
    }
}
