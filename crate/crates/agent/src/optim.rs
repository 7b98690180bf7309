//! Adam with L2 weight decay folded into the gradient.

use crate::loss::LossWeights;
use crate::net::NetError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub betas: (f64, f64),
    pub eps: f64,
    pub loss_weights: LossWeights,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 1e-5,
            betas: (0.9, 0.999),
            eps: 1e-8,
            loss_weights: LossWeights::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), String> {
        let ok = self.learning_rate >= 0.0
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.betas.0)
            && (0.0..1.0).contains(&self.betas.1)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(format!("invalid optimizer settings: {self:?}"))
        }
    }
}

/// First/second moment state.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step_count: 0 }
    }

    /// One descent step on `params` with loss gradient `grads`.
    pub fn step(&mut self, cfg: &OptimizerConfig, params: &mut [f64], grads: &[f64]) -> Result<(), NetError> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(NetError::ShapeMismatch(format!(
                "params {}, grads {}, moments {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.step_count += 1;
        let (b1, b2) = cfg.betas;
        let t = self.step_count as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let lr = cfg.learning_rate;
        for i in 0..params.len() {
            let g = grads[i] + cfg.weight_decay * params[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + cfg.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lr: f64, wd: f64) -> OptimizerConfig {
        OptimizerConfig { learning_rate: lr, weight_decay: wd, ..Default::default() }
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = vec![0.5, -2.0, 3.0];
        let mut adam = Adam::new(3);
        for _ in 0..5 {
            adam.step(&cfg(1e-2, 0.0), &mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![0.5, -2.0, 3.0]);
        assert_eq!(adam.step_count, 5);
    }

    #[test]
    fn three_steps_follow_hand_trajectory() {
        let mut p = vec![1.0];
        let mut adam = Adam::new(1);
        let expect = [0.900000009999999, 0.9366103603884888, 0.9022862539477428];
        for (g, e) in [0.1, -0.2, 0.3].into_iter().zip(expect) {
            adam.step(&cfg(0.1, 0.0), &mut p, &[g]).unwrap();
            assert!((p[0] - e).abs() < 1e-12, "{} vs {e}", p[0]);
        }
    }

    #[test]
    fn decay_shrinks_magnitude() {
        let mut p = vec![0.7, -0.3];
        let mut adam = Adam::new(2);
        adam.step(&cfg(1e-4, 1e-5), &mut p, &[0.0, 0.0]).unwrap();
        assert!(p[0] < 0.7 && p[0] > 0.0);
        assert!(p[1] > -0.3 && p[1] < 0.0);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let mut adam = Adam::new(2);
        assert!(adam.step(&cfg(0.1, 0.0), &mut [0.0, 0.0], &[1.0]).is_err());
    }
}
