//! Adam with L2 weight decay and a reduce-on-plateau learning-rate schedule.

use alloc::vec;
use alloc::vec::Vec;

/// Adam where weight decay is added to the gradient before the moment
/// updates (classic L2 form, not AdamW).
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    pub fn new(param_count: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for i in 0..params.len() {
            let g = grads[i] + self.weight_decay * params[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (libm::sqrt(v_hat) + self.eps);
        }
    }
}

/// Multiplies the learning rate by `factor` after `patience` consecutive
/// epochs without a strict improvement of the monitored loss.
#[derive(Debug, Clone)]
pub struct PlateauScheduler {
    pub factor: f64,
    pub patience: usize,
    best: f64,
    bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(factor: f64, patience: usize) -> Self {
        Self {
            factor,
            patience,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Records one epoch's metric; returns true when `lr` was reduced.
    pub fn step(&mut self, metric: f64, lr: &mut f64) -> bool {
        if metric < self.best {
            self.best = metric;
            self.bad_epochs = 0;
            return false;
        }
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            *lr *= self.factor;
            self.bad_epochs = 0;
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut params = vec![0.3, -1.2, 4.0];
        let before = params.clone();
        let mut adam = Adam::new(3, 0.01, 0.0);
        for _ in 0..10 {
            adam.step(&mut params, &[0.0; 3]);
        }
        assert_eq!(params, before);
    }

    #[test]
    fn first_step_moves_by_lr_against_the_gradient() {
        let mut params = vec![1.0, 1.0];
        let mut adam = Adam::new(2, 0.1, 0.0);
        adam.step(&mut params, &[2.0, -0.5]);
        assert!((params[0] - 0.9).abs() < 1e-7);
        assert!((params[1] - 1.1).abs() < 1e-7);
    }

    #[test]
    fn plateau_multiplies_by_factor_after_patience() {
        let mut sched = PlateauScheduler::new(0.25, 3);
        let mut lr = 0.01;
        assert!(!sched.step(1.0, &mut lr));
        assert!(!sched.step(1.0, &mut lr));
        assert!(!sched.step(1.5, &mut lr));
        assert!(sched.step(1.0, &mut lr));
        assert_eq!(lr, 0.01 * 0.25);
        assert!(!sched.step(0.5, &mut lr));
    }
}
