use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::params::{visit_params, visit_params_mut, Parameters};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias-corrected moments, keyed by parameter name.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u32,
    moments: BTreeMap<String, (Vec<f32>, Vec<f32>)>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam { config, step: 0, moments: BTreeMap::new() }
    }

    pub fn steps_taken(&self) -> u32 {
        self.step
    }

    pub fn set_lr(&mut self, lr: f32) {
        self.config.lr = lr;
    }

    /// First and second moment for `name`, if that parameter has been updated.
    pub fn moments(&self, name: &str) -> Option<(&[f32], &[f32])> {
        self.moments.get(name).map(|(m, v)| (m.as_slice(), v.as_slice()))
    }

    /// Applies one update to every trainable parameter. Fails without touching
    /// anything if a trainable parameter has no gradient.
    pub fn step<P: Parameters + ?Sized>(&mut self, model: &mut P) -> Result<()> {
        let mut missing = None;
        visit_params(model, &mut |name, t| {
            if t.requires_grad && t.grad.is_none() && missing.is_none() {
                missing = Some(String::from(name));
            }
        });
        if let Some(name) = missing {
            return Err(Error::Contract(format!("parameter `{name}` has no gradient")));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - math::pow(beta1, self.step as f32);
        let bc2 = 1.0 - math::pow(beta2, self.step as f32);
        let moments = &mut self.moments;
        visit_params_mut(model, &mut |name, t| {
            if !t.requires_grad {
                return;
            }
            let Some(grad) = t.grad.take() else { return };
            let n = grad.len();
            let (m, v) = moments.entry(String::from(name)).or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            for (i, p) in t.data_mut().iter_mut().enumerate() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *p -= lr * m_hat / (math::sqrt(v_hat) + eps);
            }
            t.grad = Some(grad);
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut p = Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap().trainable();
        p.grad = Some(vec![0.0; 3]);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut p).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn zero_learning_rate_leaves_parameter() {
        let mut p = Tensor::new(&[2], vec![0.3, 0.7]).unwrap().trainable();
        p.grad = Some(vec![5.0, -1.0]);
        let mut adam = Adam::new(AdamConfig { lr: 0.0, ..AdamConfig::default() });
        adam.step(&mut p).unwrap();
        assert_eq!(p.data(), &[0.3, 0.7]);
    }

    #[test]
    fn scalar_step_matches_hand_formula() {
        // Two steps so the second starts from known non-zero moments.
        let cfg = AdamConfig { lr: 0.01, beta1: 0.9, beta2: 0.999, eps: 1e-8 };
        let mut p = Tensor::scalar(1.0).trainable();
        let mut adam = Adam::new(cfg);
        p.grad = Some(vec![0.5]);
        adam.step(&mut p).unwrap();
        p.grad = Some(vec![-0.2]);
        adam.step(&mut p).unwrap();

        // Oracle in f64 with the same f32-rounded hyperparameters.
        let (b1, b2, lr, eps) = (0.9f32 as f64, 0.999f32 as f64, 0.01f32 as f64, 1e-8f32 as f64);
        let mut x = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for (t, g) in [(1, 0.5f64), (2, -0.2f64)] {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - libm::pow(b1, t as f64));
            let vh = v / (1.0 - libm::pow(b2, t as f64));
            x -= lr * mh / (libm::sqrt(vh) + eps);
        }
        assert!((p.data()[0] as f64 - x).abs() < 1e-6, "{} vs {}", p.data()[0], x);
        let (m1, v1) = adam.moments("").unwrap();
        assert!((m1[0] as f64 - m).abs() < 1e-7);
        assert!((v1[0] as f64 - v).abs() < 1e-9);
    }

    #[test]
    fn missing_gradient_is_rejected() {
        let mut p = Tensor::scalar(1.0).trainable();
        let mut adam = Adam::new(AdamConfig::default());
        assert!(matches!(adam.step(&mut p), Err(Error::Contract(_))));
        assert_eq!(p.data(), &[1.0]);
    }
}
