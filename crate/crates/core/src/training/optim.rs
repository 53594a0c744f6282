use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub weight_decay: f64,
    /// Global L2 gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 0.01,
            clip_norm: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    cfg: OptimizerConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamW {
    pub fn new(cfg: OptimizerConfig, num_params: usize) -> Self {
        Self {
            cfg,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Clips `grad` in place and applies one update. Returns the pre-clip norm.
    pub fn step(&mut self, params: &mut [f64], grad: &mut [f64]) -> f64 {
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if self.cfg.clip_norm > 0.0 && norm > self.cfg.clip_norm {
            let s = self.cfg.clip_norm / norm;
            grad.iter_mut().for_each(|g| *g *= s);
        }
        self.t += 1;
        let OptimizerConfig {
            lr,
            weight_decay,
            beta1,
            beta2,
            eps,
            ..
        } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * params[i]);
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_each_coordinate_by_lr() {
        let cfg = OptimizerConfig {
            weight_decay: 0.0,
            clip_norm: 0.0,
            ..Default::default()
        };
        let mut opt = AdamW::new(cfg, 2);
        let mut p = vec![1.0, -1.0];
        let mut g = vec![0.5, -3.0];
        opt.step(&mut p, &mut g);
        assert!((p[0] - (1.0 - 1e-4)).abs() < 1e-9);
        assert!((p[1] - (-1.0 + 1e-4)).abs() < 1e-9);
    }

    #[test]
    fn clipping_and_decay() {
        let mut opt = AdamW::new(OptimizerConfig::default(), 2);
        let mut g = vec![3.0, 4.0];
        let mut p = vec![0.0, 0.0];
        assert_eq!(opt.step(&mut p, &mut g), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);

        let mut opt = AdamW::new(OptimizerConfig::default(), 1);
        let mut p = vec![2.0];
        opt.step(&mut p, &mut [0.0]);
        assert!((p[0] - (2.0 - 1e-4 * 0.01 * 2.0)).abs() < 1e-15);
    }
}
