//! Adaptive-moment optimizer with bias correction.

/// First/second moment state for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One bias-corrected update. `maximize` flips the gradient sign so the
    /// same state can drive ascent.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], maximize: bool) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let sign = if maximize { -1.0 } else { 1.0 };
        for i in 0..params.len() {
            let g = sign * grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut opt = AdamState::new(3, 0.1);
        let mut params = vec![1.0, -2.0, 0.5];
        opt.step(&mut params, &[0.0; 3], false);
        assert_eq!(params, vec![1.0, -2.0, 0.5]);
        assert_eq!(opt.steps_taken(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate_times_sign() {
        for &g in &[3.0, -0.02, 1e-6] {
            let mut opt = AdamState::new(1, 0.01);
            let mut params = vec![0.0];
            opt.step(&mut params, &[g], false);
            // Bias-corrected first step is lr·g/(|g| + eps) ≈ lr·sign(g).
            let want = -0.01 * g.signum();
            assert!((params[0] - want).abs() < 0.02 * 0.01, "g={g} got {}", params[0]);
        }
    }

    #[test]
    fn maximize_flips_direction() {
        let mut opt = AdamState::new(1, 0.01);
        let mut params = vec![0.0];
        opt.step(&mut params, &[2.0], true);
        assert!(params[0] > 0.0);
    }

    #[test]
    fn updates_are_deterministic() {
        let run = || {
            let mut opt = AdamState::new(2, 0.05);
            let mut params = vec![0.3, -0.1];
            for i in 0..10 {
                opt.step(&mut params, &[0.1 * i as f64, -0.2], false);
            }
            params
        };
        let a = run();
        let b = run();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }
}
