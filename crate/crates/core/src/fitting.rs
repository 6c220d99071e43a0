//! Step 3: fitting the parametric Gaussian policy to the weighted action
//! samples by constrained maximum likelihood.
//!
//! The decoupled form optimizes two log-likelihood terms jointly — one
//! through the mean with scales frozen to the target network's, one through
//! the scales with the mean frozen — under separate KL trust regions for
//! mean and covariance. The coupled form is the plain weighted MLE under a
//! single full-Gaussian KL bound. Both are solved by Lagrangian relaxation
//! with exactly one multiplier descent step and one parameter ascent step
//! per batch.

use crate::approx::{AdamState, PolicyNet};
use crate::error::{Error, Result};
use crate::gauss::{kl_cov, kl_mean, sigmoid, softplus, LN_2PI};
use crate::weighting::WeightedBatch;

/// Trust-region radii: ε_μ and ε_Σ for the decoupled objective, and the
/// optional ε_π of the coupled variant (infinite disables the constraint).
#[derive(Debug, Clone, Copy)]
pub struct KlBounds {
    pub eps_mean: f64,
    pub eps_cov: f64,
    pub coupled_eps: Option<f64>,
}

impl KlBounds {
    pub fn new(eps_mean: f64, eps_cov: f64, coupled_eps: Option<f64>) -> Result<Self> {
        if !(eps_mean > 0.0) || !(eps_cov > 0.0) || coupled_eps.is_some_and(|e| !(e > 0.0)) {
            return Err(Error::InvalidParameter("KL bounds must be positive".into()));
        }
        Ok(Self { eps_mean, eps_cov, coupled_eps })
    }
}

/// Lagrange multipliers, stored as raw reals mapped through softplus so the
/// effective values stay non-negative. Updated by one adaptive-moment
/// descent step per batch on `α·(ε − KL)`.
#[derive(Debug, Clone)]
pub struct MultiplierState {
    raw: [f64; 2],
    opt: AdamState,
}

impl MultiplierState {
    /// `initial` is the starting *effective* multiplier value.
    pub fn new(initial: f64, step_size: f64) -> Result<Self> {
        if !(initial > 0.0) || !(step_size > 0.0) {
            return Err(Error::InvalidParameter(
                "multiplier init and step size must be positive".into(),
            ));
        }
        let raw = crate::gauss::softplus_inv(initial);
        Ok(Self { raw: [raw, raw], opt: AdamState::new(2, step_size) })
    }

    pub fn alpha_mean(&self) -> f64 {
        softplus(self.raw[0])
    }

    pub fn alpha_cov(&self) -> f64 {
        softplus(self.raw[1])
    }

    /// Descent step on the multiplier part of the Lagrangian: α grows when
    /// its KL exceeds the bound and shrinks otherwise.
    pub fn update(&mut self, observed_kl_mean: f64, observed_kl_cov: f64, bounds: &KlBounds) {
        let grad = [
            sigmoid(self.raw[0]) * (bounds.eps_mean - observed_kl_mean),
            sigmoid(self.raw[1]) * (bounds.eps_cov - observed_kl_cov),
        ];
        self.opt.step(&mut self.raw, &grad, false);
    }

    /// Coupled variant: only the first multiplier slot is live.
    pub fn update_coupled(&mut self, observed_kl: f64, eps_pi: f64) {
        let grad = [sigmoid(self.raw[0]) * (eps_pi - observed_kl), 0.0];
        self.opt.step(&mut self.raw, &grad, false);
    }
}

/// Value (and optionally θ-gradient) of a fitting objective on one batch.
#[derive(Debug, Clone)]
pub struct ObjectiveEval {
    /// Full Lagrangian value (likelihood terms plus multiplier terms).
    pub value: f64,
    /// The weighted log-likelihood part alone.
    pub weighted_loglik: f64,
    /// Batch-mean KL(target ‖ live) through the mean, scales frozen.
    pub kl_mean: f64,
    /// Batch-mean KL(target ‖ live) through the scales, mean frozen.
    pub kl_cov: f64,
    /// Batch-mean full-Gaussian KL(target ‖ live).
    pub kl_full: f64,
    pub grad: Option<Vec<f64>>,
}

/// Diagnostics returned by one fitting step.
#[derive(Debug, Clone, Copy)]
pub struct FitMetrics {
    pub weighted_loglik: f64,
    /// Batch-mean KLs measured after the parameter update.
    pub kl_mean_obs: f64,
    pub kl_cov_obs: f64,
    pub alpha_mean: f64,
    pub alpha_cov: f64,
}

fn validate_batch(policy: &PolicyNet, batch: &WeightedBatch) -> Result<()> {
    let k = batch.states.len();
    if k == 0 {
        return Err(Error::EmptyBatch);
    }
    if batch.actions.len() != k || batch.weights.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: batch.actions.len() });
    }
    let d = policy.action_dim();
    for (actions, weights) in batch.actions.iter().zip(&batch.weights) {
        if actions.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: actions.len(),
                got: weights.len(),
            });
        }
        if actions.iter().any(|a| a.len() != d) {
            return Err(Error::InvalidParameter("action dimension mismatch".into()));
        }
    }
    Ok(())
}

/// `Σ_m [-(x_m-μ_m)²/(2a_m²) - ln a_m] - (d/2) ln 2π` for explicit μ, a.
fn log_density_with(mean: &[f64], std: &[f64], x: &[f64]) -> f64 {
    let mut acc = -0.5 * mean.len() as f64 * LN_2PI;
    for ((&xm, &mm), &am) in x.iter().zip(mean).zip(std) {
        let z = (xm - mm) / am;
        acc -= 0.5 * z * z + am.ln();
    }
    acc
}

struct StateTerms {
    /// d(objective)/d(mean outputs), accumulated per state.
    d_mean: Vec<f64>,
    /// d(objective)/d(effective scales), accumulated per state.
    d_std: Vec<f64>,
}

/// Evaluates the decoupled Lagrangian
/// `(1/K) Σ_j Σ_i q_ij [log N(a; μ_θ, a_k) + log N(a; μ_k, a_θ)]
///  + α_μ(ε_μ − KL̄_μ) + α_Σ(ε_Σ − KL̄_Σ)`
/// at the current policy parameters, with the target snapshot supplying
/// μ_k, a_k. The likelihood is averaged over states; weights already sum to
/// one within a state for the normalized transforms.
pub fn decoupled_value_grad(
    policy: &PolicyNet,
    target: &PolicyNet,
    batch: &WeightedBatch,
    bounds: &KlBounds,
    alpha_mean: f64,
    alpha_cov: f64,
    with_grad: bool,
) -> Result<ObjectiveEval> {
    validate_batch(policy, batch)?;
    let k = batch.states.len() as f64;
    let d = policy.action_dim();

    let mut loglik = 0.0;
    let mut kl_mu = 0.0;
    let mut kl_sig = 0.0;
    let mut kl_f = 0.0;
    let mut grad = if with_grad { Some(vec![0.0; policy.params.len()]) } else { None };

    for (j, state) in batch.states.iter().enumerate() {
        let (live, cache) = policy.head_with_cache(state)?;
        let t_head = target.head(state)?;
        let live_std = live.std();
        let t_std = t_head.std();

        kl_mu += kl_mean(&t_head, live.mean())? / k;
        kl_sig += kl_cov(&t_head, &live_std)? / k;
        kl_f += crate::gauss::kl_full(&t_head, &live)? / k;

        let mut terms = StateTerms { d_mean: vec![0.0; d], d_std: vec![0.0; d] };
        for (action, &w) in batch.actions[j].iter().zip(&batch.weights[j]) {
            // Mean term: live mean under frozen target scales.
            loglik += w * log_density_with(live.mean(), &t_std, action) / k;
            // Covariance term: live scales under the frozen target mean.
            loglik += w * log_density_with(t_head.mean(), &live_std, action) / k;
            if with_grad {
                for m in 0..d {
                    let tk = t_std[m];
                    let al = live_std[m];
                    terms.d_mean[m] += w * (action[m] - live.mean()[m]) / (tk * tk);
                    let dev = action[m] - t_head.mean()[m];
                    terms.d_std[m] += w * (dev * dev / (al * al * al) - 1.0 / al);
                }
            }
        }
        if with_grad {
            for m in 0..d {
                let tk = t_std[m];
                let al = live_std[m];
                // -α_μ · dKL_μ/dμ and -α_Σ · dKL_Σ/da for this state.
                terms.d_mean[m] -=
                    alpha_mean * (live.mean()[m] - t_head.mean()[m]) / (tk * tk);
                terms.d_std[m] -= alpha_cov * (1.0 / al - tk * tk / (al * al * al));
            }
            let g = grad.as_mut().unwrap();
            let scale = 1.0 / k;
            let d_mean: Vec<f64> = terms.d_mean.iter().map(|v| v * scale).collect();
            let d_std: Vec<f64> = terms.d_std.iter().map(|v| v * scale).collect();
            policy.backward_head(&cache, &d_mean, &d_std, g)?;
        }
    }

    let value = loglik
        + alpha_mean * (bounds.eps_mean - kl_mu)
        + alpha_cov * (bounds.eps_cov - kl_sig);
    if !value.is_finite() {
        return Err(Error::NonFinite("decoupled fitting objective".into()));
    }
    Ok(ObjectiveEval {
        value,
        weighted_loglik: loglik,
        kl_mean: kl_mu,
        kl_cov: kl_sig,
        kl_full: kl_f,
        grad,
    })
}

/// Evaluates the coupled Lagrangian
/// `(1/K) Σ_j Σ_i q_ij log N(a; μ_θ, a_θ) + α(ε_π − KL̄)`
/// with a single full-Gaussian trust region.
pub fn coupled_value_grad(
    policy: &PolicyNet,
    target: &PolicyNet,
    batch: &WeightedBatch,
    eps_pi: f64,
    alpha: f64,
    with_grad: bool,
) -> Result<ObjectiveEval> {
    validate_batch(policy, batch)?;
    let k = batch.states.len() as f64;
    let d = policy.action_dim();

    let mut loglik = 0.0;
    let mut kl_mu = 0.0;
    let mut kl_sig = 0.0;
    let mut kl_f = 0.0;
    let mut grad = if with_grad { Some(vec![0.0; policy.params.len()]) } else { None };

    for (j, state) in batch.states.iter().enumerate() {
        let (live, cache) = policy.head_with_cache(state)?;
        let t_head = target.head(state)?;
        let live_std = live.std();

        kl_mu += kl_mean(&t_head, live.mean())? / k;
        kl_sig += kl_cov(&t_head, &live_std)? / k;
        kl_f += crate::gauss::kl_full(&t_head, &live)? / k;

        let mut terms = StateTerms { d_mean: vec![0.0; d], d_std: vec![0.0; d] };
        for (action, &w) in batch.actions[j].iter().zip(&batch.weights[j]) {
            loglik += w * log_density_with(live.mean(), &live_std, action) / k;
            if with_grad {
                for m in 0..d {
                    let al = live_std[m];
                    let dev = action[m] - live.mean()[m];
                    terms.d_mean[m] += w * dev / (al * al);
                    terms.d_std[m] += w * (dev * dev / (al * al * al) - 1.0 / al);
                }
            }
        }
        if with_grad {
            for m in 0..d {
                let al = live_std[m];
                let tk = t_head.std()[m];
                let dmu = live.mean()[m] - t_head.mean()[m];
                // Full-KL derivatives under the live covariance.
                terms.d_mean[m] -= alpha * dmu / (al * al);
                terms.d_std[m] -=
                    alpha * (1.0 / al - (tk * tk + dmu * dmu) / (al * al * al));
            }
            let g = grad.as_mut().unwrap();
            let scale = 1.0 / k;
            let d_mean: Vec<f64> = terms.d_mean.iter().map(|v| v * scale).collect();
            let d_std: Vec<f64> = terms.d_std.iter().map(|v| v * scale).collect();
            policy.backward_head(&cache, &d_mean, &d_std, g)?;
        }
    }

    let value = if eps_pi.is_infinite() { loglik } else { loglik + alpha * (eps_pi - kl_f) };
    if !value.is_finite() {
        return Err(Error::NonFinite("coupled fitting objective".into()));
    }
    Ok(ObjectiveEval {
        value,
        weighted_loglik: loglik,
        kl_mean: kl_mu,
        kl_cov: kl_sig,
        kl_full: kl_f,
        grad,
    })
}

fn post_step_kls(policy: &PolicyNet, target: &PolicyNet, batch: &WeightedBatch) -> Result<(f64, f64, f64)> {
    let k = batch.states.len() as f64;
    let mut kl_mu = 0.0;
    let mut kl_sig = 0.0;
    let mut kl_f = 0.0;
    for state in &batch.states {
        let live = policy.head(state)?;
        let t_head = target.head(state)?;
        kl_mu += kl_mean(&t_head, live.mean())? / k;
        kl_sig += kl_cov(&t_head, &live.std())? / k;
        kl_f += crate::gauss::kl_full(&t_head, &live)? / k;
    }
    Ok((kl_mu, kl_sig, kl_f))
}

/// One decoupled improvement step: a multiplier descent step on the KLs
/// measured at the current parameters, then a single ascent step on θ.
/// Reported KLs are re-measured after the θ update.
pub fn fit_step_decoupled(
    policy: &mut PolicyNet,
    target: &PolicyNet,
    batch: &WeightedBatch,
    bounds: &KlBounds,
    mult: &mut MultiplierState,
    opt: &mut AdamState,
) -> Result<FitMetrics> {
    let probe = decoupled_value_grad(policy, target, batch, bounds, 0.0, 0.0, false)?;
    mult.update(probe.kl_mean, probe.kl_cov, bounds);
    let (a_mu, a_sig) = (mult.alpha_mean(), mult.alpha_cov());
    let eval = decoupled_value_grad(policy, target, batch, bounds, a_mu, a_sig, true)?;
    let grad = eval.grad.as_ref().unwrap();
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("decoupled fitting gradient".into()));
    }
    opt.step(&mut policy.params, grad, true);
    let (kl_mu, kl_sig, _) = post_step_kls(policy, target, batch)?;
    Ok(FitMetrics {
        weighted_loglik: eval.weighted_loglik,
        kl_mean_obs: kl_mu,
        kl_cov_obs: kl_sig,
        alpha_mean: a_mu,
        alpha_cov: a_sig,
    })
}

/// One coupled improvement step. An infinite `eps_pi` pins the multiplier to
/// zero, reducing the update to unregularized weighted MLE.
pub fn fit_step_coupled(
    policy: &mut PolicyNet,
    target: &PolicyNet,
    batch: &WeightedBatch,
    eps_pi: f64,
    mult: &mut MultiplierState,
    opt: &mut AdamState,
) -> Result<FitMetrics> {
    let unconstrained = eps_pi.is_infinite();
    let alpha = if unconstrained {
        0.0
    } else {
        let probe = coupled_value_grad(policy, target, batch, eps_pi, 0.0, false)?;
        mult.update_coupled(probe.kl_full, eps_pi);
        mult.alpha_mean()
    };
    let eval = coupled_value_grad(policy, target, batch, eps_pi, alpha, true)?;
    let grad = eval.grad.as_ref().unwrap();
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("coupled fitting gradient".into()));
    }
    opt.step(&mut policy.params, grad, true);
    let (kl_mu, kl_sig, _) = post_step_kls(policy, target, batch)?;
    Ok(FitMetrics {
        weighted_loglik: eval.weighted_loglik,
        kl_mean_obs: kl_mu,
        kl_cov_obs: kl_sig,
        alpha_mean: alpha,
        alpha_cov: 0.0,
    })
}
