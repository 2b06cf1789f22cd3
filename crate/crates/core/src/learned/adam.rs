use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Elementwise gradient bounds applied before each step.
    pub clip: (f64, f64),
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: (-5.0, 5.0),
        }
    }
}

/// Adam moments over one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl TrainState {
    pub fn new(n_params: usize, config: AdamConfig) -> Result<Self> {
        let (lo, hi) = config.clip;
        if !(config.lr > 0.0) || !(lo < hi) || !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.beta2) {
            return Err(Error::param(format!("invalid optimizer settings {config:?}")));
        }
        Ok(TrainState {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn clip(&self, grad: &mut [f64]) {
        let (lo, hi) = self.config.clip;
        grad.iter_mut().for_each(|g| *g = g.clamp(lo, hi));
    }

    /// Clip `grad` in place, then take one bias-corrected Adam step on `theta`.
    pub fn step(&mut self, theta: &mut [f64], grad: &mut [f64]) -> Result<()> {
        if theta.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::shape(format!(
                "optimizer holds {} moments, got {} params / {} grads",
                self.m.len(),
                theta.len(),
                grad.len()
            )));
        }
        self.clip(grad);
        self.step += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            theta[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut s = TrainState::new(3, AdamConfig::default()).unwrap();
        let mut theta = vec![1.0, 1.0, 1.0];
        let mut g = vec![0.5, -2.0, 0.0];
        s.step(&mut theta, &mut g).unwrap();
        assert!((theta[0] - (1.0 - 1e-4)).abs() < 1e-9);
        assert!((theta[1] - (1.0 + 1e-4)).abs() < 1e-9);
        assert_eq!(theta[2], 1.0);
    }

    #[test]
    fn clipping_is_elementwise() {
        let s = TrainState::new(3, AdamConfig::default()).unwrap();
        let mut g = vec![10.0, -7.0, 1.0];
        s.clip(&mut g);
        assert_eq!(g, vec![5.0, -5.0, 1.0]);
    }

    #[test]
    fn minimizes_quadratic() {
        let cfg = AdamConfig { lr: 0.05, ..Default::default() };
        let mut s = TrainState::new(2, cfg).unwrap();
        let mut theta = vec![3.0, -2.0];
        for _ in 0..2000 {
            let mut g: Vec<f64> = theta.iter().map(|t| 2.0 * t).collect();
            s.step(&mut theta, &mut g).unwrap();
        }
        assert!(theta.iter().all(|t| t.abs() < 1e-2));
    }

    #[test]
    fn rejects_bad_settings() {
        assert!(TrainState::new(1, AdamConfig { lr: 0.0, ..Default::default() }).is_err());
        assert!(TrainState::new(1, AdamConfig { clip: (1.0, -1.0), ..Default::default() }).is_err());
        let mut s = TrainState::new(2, AdamConfig::default()).unwrap();
        assert!(s.step(&mut [0.0], &mut [0.0]).is_err());
    }
}
