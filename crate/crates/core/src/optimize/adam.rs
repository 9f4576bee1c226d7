use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "AdamConfig::default_beta1")]
    pub beta1: f64,
    #[serde(default = "AdamConfig::default_beta2")]
    pub beta2: f64,
    #[serde(default = "AdamConfig::default_eps")]
    pub eps: f64,
    /// Learning rate at the last iteration as a fraction of `lr`; the rate
    /// decays geometrically in between. 1 disables decay.
    #[serde(default = "AdamConfig::default_final_lr")]
    pub final_lr_fraction: f64,
}

impl AdamConfig {
    fn default_beta1() -> f64 {
        0.9
    }
    fn default_beta2() -> f64 {
        0.999
    }
    fn default_eps() -> f64 {
        1e-8
    }
    fn default_final_lr() -> f64 {
        1.0
    }

    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            final_lr_fraction: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !(self.lr > 0.0) || !unit(self.beta1) || !unit(self.beta2) || !(self.eps > 0.0) {
            return Err(Error::config("adam needs lr > 0, betas in [0, 1) and eps > 0"));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(Error::config("final_lr_fraction must be in (0, 1]"));
        }
        Ok(())
    }

    /// Learning rate at `iteration` of `total`.
    pub fn lr_at(&self, iteration: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.lr;
        }
        let s = iteration as f64 / (total - 1) as f64;
        self.lr * self.final_lr_fraction.powf(s)
    }
}

/// Bias-corrected Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], cfg: &AdamConfig, lr: f64) -> Result<()> {
        if theta.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::config("adam state does not match the parameter count"));
        }
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let c2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            theta[i] -= lr * mh / (vh.sqrt() + cfg.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_theta() {
        let mut th = vec![1.0, -2.0];
        let mut a = Adam::new(2);
        a.step(&mut th, &[0.0, 0.0], &AdamConfig::new(0.1), 0.1).unwrap();
        assert_eq!(th, vec![1.0, -2.0]);
    }

    #[test]
    fn constant_gradient_steps_approach_lr() {
        let mut th = vec![0.0, 0.0];
        let mut a = Adam::new(2);
        let cfg = AdamConfig::new(0.01);
        for _ in 0..200 {
            let before = th.clone();
            a.step(&mut th, &[3.0, -0.5], &cfg, 0.01).unwrap();
            assert!(((before[0] - th[0]) - 0.01).abs() < 1e-8);
            assert!(((th[1] - before[1]) - 0.01).abs() < 1e-8);
        }
    }

    #[test]
    fn matches_hand_trace_on_quadratic() {
        // f = 0.5 * x^2, x0 = 1; reference recursion written out longhand
        let cfg = AdamConfig::new(0.1);
        let mut th = vec![1.0];
        let mut a = Adam::new(1);
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=10 {
            let g = x;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.1 * mh / (vh.sqrt() + 1e-8);
            let g = [th[0]];
            a.step(&mut th, &g, &cfg, 0.1).unwrap();
            assert!((th[0] - x).abs() < 1e-12);
        }
    }

    #[test]
    fn lr_decays_geometrically() {
        let mut c = AdamConfig::new(0.1);
        c.final_lr_fraction = 0.01;
        assert_eq!(c.lr_at(0, 11), 0.1);
        assert!((c.lr_at(10, 11) - 0.001).abs() < 1e-15);
        assert!((c.lr_at(5, 11) - 0.01).abs() < 1e-15);
    }
}
