//! Adaptive-moment (Adam) optimizer with bias correction.

use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One Adam update of `param` in place. `t` is the 1-based step count.
pub fn adam_step(param: &mut [f64], grad: &[f64], state: &mut AdamState, t: u64, cfg: &AdamConfig) {
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..param.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let mhat = state.m[i] / bc1;
        let vhat = state.v[i] / bc2;
        param[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
    }
}

/// Adam over a list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    states: Vec<AdamState>,
    t: u64,
}

impl Adam {
    pub fn new(params: &[Tensor], config: AdamConfig) -> Self {
        Self {
            config,
            states: params.iter().map(|p| AdamState::zeros(p.len())).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) {
        self.t += 1;
        for ((p, g), s) in params.iter_mut().zip(grads).zip(&mut self.states) {
            adam_step(p.data_mut(), g.data(), s, self.t, &self.config);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_descends_square() {
        let mut w = [1.0];
        let mut s = AdamState::zeros(1);
        let cfg = AdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        adam_step(&mut w, &[2.0 * 1.0], &mut s, 1, &cfg);
        assert!(w[0] < 1.0);
    }

    #[test]
    fn convex_quadratic_converges() {
        // f(w) = sum_i c_i (w_i - t_i)^2, optimum at t
        let c: Vec<f64> = (0..10).map(|i| 1.0 + i as f64 * 0.5).collect();
        let target: Vec<f64> = (0..10).map(|i| (i as f64 - 4.5) * 0.3).collect();
        let mut params = vec![Tensor::new(vec![10], vec![0.0; 10]).unwrap()];
        let cfg = AdamConfig {
            lr: 0.05,
            ..Default::default()
        };
        let mut opt = Adam::new(&params, cfg);
        let loss = |w: &[f64]| -> f64 {
            w.iter()
                .zip(&c)
                .zip(&target)
                .map(|((w, c), t)| c * (w - t) * (w - t))
                .sum()
        };
        for step in 0..600 {
            let w = params[0].data();
            let g: Vec<f64> = w
                .iter()
                .zip(&c)
                .zip(&target)
                .map(|((w, c), t)| 2.0 * c * (w - t))
                .collect();
            // decay the rate so the final iterates settle inside the basin
            opt.config.lr = 0.05 * 0.99f64.powi(step);
            opt.step(&mut params, &[Tensor::new(vec![10], g).unwrap()]);
        }
        assert!(loss(params[0].data()) < 1e-6, "{}", loss(params[0].data()));
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut w = [0.25, -1.5];
        let mut s = AdamState::zeros(2);
        adam_step(&mut w, &[0.0, 0.0], &mut s, 1, &AdamConfig::default());
        assert_eq!(w, [0.25, -1.5]);
    }
}
