//! Gaussian policy wrapper: a net whose output of width 2d splits into
//! `[mean | chol_raw]`, evaluated per state into a [`GaussianHead`].

use rand::Rng;

use crate::error::{Error, Result};
use crate::gauss::{sigmoid, softplus_inv, GaussianHead};

use super::net::{backward, forward, init_params, Activation, ForwardCache, NetSpec};

#[derive(Debug, Clone)]
pub struct PolicyNet {
    pub spec: NetSpec,
    pub params: Vec<f64>,
}

impl PolicyNet {
    pub fn new(spec: NetSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if spec.output % 2 != 0 {
            return Err(Error::InvalidParameter(
                "policy net output width must be 2 * action_dim".into(),
            ));
        }
        if params.len() != spec.param_count() {
            return Err(Error::DimensionMismatch {
                expected: spec.param_count(),
                got: params.len(),
            });
        }
        Ok(Self { spec, params })
    }

    /// Glorot-initialized policy whose chol_raw output biases are set so the
    /// initial per-dimension scale is `init_std` at zero weights.
    pub fn init<R: Rng>(
        state_dim: usize,
        action_dim: usize,
        hidden: Vec<usize>,
        activation: Activation,
        layer_norm_first: bool,
        layer_norm_tanh: bool,
        init_std: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if !(init_std > 0.0) {
            return Err(Error::InvalidParameter("init_std must be positive".into()));
        }
        let spec = NetSpec::new(state_dim, hidden, 2 * action_dim, activation)
            .with_layer_norm(layer_norm_first, layer_norm_tanh);
        spec.validate()?;
        let mut params = init_params(&spec, rng);
        let bias = spec.output_bias_range();
        let raw = softplus_inv(init_std);
        for i in bias.start + action_dim..bias.end {
            params[i] = raw;
        }
        Ok(Self { spec, params })
    }

    pub fn action_dim(&self) -> usize {
        self.spec.output / 2
    }

    pub fn head(&self, state: &[f64]) -> Result<GaussianHead> {
        Ok(self.head_with_cache(state)?.0)
    }

    pub fn head_with_cache(&self, state: &[f64]) -> Result<(GaussianHead, ForwardCache)> {
        let cache = forward(&self.spec, &self.params, state)?;
        let d = self.action_dim();
        let out = cache.output();
        let head = GaussianHead::new(out[..d].to_vec(), out[d..].to_vec())?;
        Ok((head, cache))
    }

    /// Accumulates parameter gradients from per-head gradients. `d_mean` is
    /// the gradient with respect to the mean outputs and `d_std` with respect
    /// to the effective scales; the latter is chained through the softplus.
    pub fn backward_head(
        &self,
        cache: &ForwardCache,
        d_mean: &[f64],
        d_std: &[f64],
        grad: &mut [f64],
    ) -> Result<()> {
        let d = self.action_dim();
        if d_mean.len() != d || d_std.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: d_mean.len() });
        }
        let out = cache.output();
        let mut out_grad = vec![0.0; 2 * d];
        out_grad[..d].copy_from_slice(d_mean);
        for i in 0..d {
            out_grad[d + i] = d_std[i] * sigmoid(out[d + i]);
        }
        backward(&self.spec, &self.params, cache, &out_grad, grad)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::{kl_cov, kl_mean};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy(seed: u64) -> PolicyNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PolicyNet::init(3, 2, vec![8, 8], Activation::Elu, true, true, 0.3, &mut rng).unwrap()
    }

    #[test]
    fn output_must_be_even() {
        let spec = NetSpec::new(2, vec![4], 3, Activation::Elu);
        let params = vec![0.0; spec.param_count()];
        assert!(PolicyNet::new(spec, params).is_err());
    }

    #[test]
    fn init_std_is_honored_at_zero_weights() {
        // With zero weights the head scale comes straight from the bias.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p =
            PolicyNet::init(2, 2, vec![4], Activation::Elu, false, false, 0.3, &mut rng).unwrap();
        let bias = p.spec.output_bias_range();
        for (i, v) in p.params.iter_mut().enumerate() {
            if !bias.contains(&i) {
                *v = 0.0;
            }
        }
        let head = p.head(&[0.5, -0.5]).unwrap();
        assert_eq!(head.mean(), &[0.0, 0.0]);
        for s in head.std() {
            assert!((s - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_and_scale_outputs_are_decoupled() {
        let p = policy(5);
        let state = [0.2, -0.4, 1.0];
        let base = p.head(&state).unwrap();
        let d = p.action_dim();
        let bias = p.spec.output_bias_range();

        // Bump a mean-output bias: scales unchanged, mean moves.
        let mut bumped = p.clone();
        bumped.params[bias.start] += 0.37;
        let h = bumped.head(&state).unwrap();
        assert!(kl_cov(&base, &h.std()).unwrap().abs() < 1e-15);
        assert!(kl_mean(&base, h.mean()).unwrap() > 0.0);

        // Bump a chol-output bias: mean unchanged, scales move.
        let mut bumped = p.clone();
        bumped.params[bias.start + d] += 0.37;
        let h = bumped.head(&state).unwrap();
        assert!(kl_mean(&base, h.mean()).unwrap() == 0.0);
        assert!(kl_cov(&base, &h.std()).unwrap() > 0.0);
    }

    #[test]
    fn backward_head_matches_finite_differences() {
        let p = policy(9);
        let state = [0.4, 0.1, -0.9];
        let d_mean = [0.7, -1.3];
        let d_std = [0.2, 0.9];

        let (_, cache) = p.head_with_cache(&state).unwrap();
        let mut grad = vec![0.0; p.params.len()];
        p.backward_head(&cache, &d_mean, &d_std, &mut grad).unwrap();

        let f = |params: &[f64]| {
            let q = PolicyNet::new(p.spec.clone(), params.to_vec()).unwrap();
            let head = q.head(&state).unwrap();
            let std = head.std();
            head.mean().iter().zip(&d_mean).map(|(m, g)| m * g).sum::<f64>()
                + std.iter().zip(&d_std).map(|(s, g)| s * g).sum::<f64>()
        };
        let fd = crate::verify::finite_diff_grad(f, &p.params, 1e-5);
        assert!(crate::verify::max_rel_err(&grad, &fd) < 1e-4);
    }
}
