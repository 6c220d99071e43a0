//! Diagonal-Gaussian policy-head math: construction, sampling, log-density,
//! entropy, and the decoupled mean/covariance KL divergences.
//!
//! The head stores the raw (pre-softplus) diagonal Cholesky factors; the
//! effective per-dimension scale is `a_i = softplus(chol_raw_i) > 0`, so the
//! covariance `diag(a_i^2)` is positive definite by construction. All density
//! computations stay in natural-log space.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.8378770664093453;

/// Numerically stable `ln(1 + exp(x))`.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`]: `ln(exp(a) - 1)` for `a > 0`, stable for small `a`.
pub fn softplus_inv(a: f64) -> f64 {
    debug_assert!(a > 0.0);
    if a > 30.0 {
        a
    } else {
        a.exp_m1().ln()
    }
}

/// Logistic sigmoid, the derivative of [`softplus`].
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A per-state diagonal Gaussian: mean plus softplus-parameterized diagonal
/// Cholesky factors.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianHead {
    mean: Vec<f64>,
    chol_raw: Vec<f64>,
}

/// An action drawn from a head together with its log-density under the
/// generating head.
#[derive(Debug, Clone)]
pub struct ActionSample {
    pub action: Vec<f64>,
    pub log_prob: f64,
}

impl GaussianHead {
    pub fn new(mean: Vec<f64>, chol_raw: Vec<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::InvalidParameter("head dimension must be >= 1".into()));
        }
        if mean.len() != chol_raw.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: chol_raw.len(),
            });
        }
        if mean.iter().chain(chol_raw.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("GaussianHead parameters".into()));
        }
        Ok(Self { mean, chol_raw })
    }

    /// Builds a head with the given effective standard deviations.
    pub fn from_std(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidParameter("std must be strictly positive".into()));
        }
        let chol_raw = std.iter().map(|&s| softplus_inv(s)).collect();
        Self::new(mean, chol_raw)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn chol_raw(&self) -> &[f64] {
        &self.chol_raw
    }

    /// Effective per-dimension scales `a_i = softplus(chol_raw_i)`.
    pub fn std(&self) -> Vec<f64> {
        self.chol_raw.iter().map(|&c| softplus(c)).collect()
    }

    /// Draws `count` actions `mean + a ⊙ z`, `z ~ N(0, I)`, each paired with
    /// its log-density.
    pub fn sample<R: Rng>(&self, count: usize, rng: &mut R) -> Vec<ActionSample> {
        let std = self.std();
        (0..count)
            .map(|_| {
                let action: Vec<f64> = self
                    .mean
                    .iter()
                    .zip(&std)
                    .map(|(&m, &a)| {
                        let z: f64 = rng.sample(StandardNormal);
                        m + a * z
                    })
                    .collect();
                let log_prob = self
                    .log_density(&action)
                    .expect("sample has matching dimension");
                ActionSample { action, log_prob }
            })
            .collect()
    }

    /// Natural-log density `Σ_i [-(x_i-μ_i)²/(2a_i²) - ln a_i] - (d/2) ln 2π`.
    pub fn log_density(&self, action: &[f64]) -> Result<f64> {
        if action.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: action.len(),
            });
        }
        let mut acc = -0.5 * self.dim() as f64 * LN_2PI;
        for ((&x, &m), &c) in action.iter().zip(&self.mean).zip(&self.chol_raw) {
            let a = softplus(c);
            let z = (x - m) / a;
            acc -= 0.5 * z * z + a.ln();
        }
        Ok(acc)
    }

    /// Differential entropy `d/2 (1 + ln 2π) + Σ_i ln a_i`.
    pub fn entropy(&self) -> f64 {
        let d = self.dim() as f64;
        0.5 * d * (1.0 + LN_2PI) + self.chol_raw.iter().map(|&c| softplus(c).ln()).sum::<f64>()
    }
}

/// KL between `old` and a Gaussian with mean `new_mean` sharing the old
/// covariance: `½ Σ_i ((new_i - old_i)/a_old_i)²`.
pub fn kl_mean(old: &GaussianHead, new_mean: &[f64]) -> Result<f64> {
    if new_mean.len() != old.dim() {
        return Err(Error::DimensionMismatch {
            expected: old.dim(),
            got: new_mean.len(),
        });
    }
    let mut acc = 0.0;
    for ((&n, &o), &c) in new_mean.iter().zip(&old.mean).zip(&old.chol_raw) {
        let z = (n - o) / softplus(c);
        acc += z * z;
    }
    Ok(0.5 * acc)
}

/// KL between `old` and a Gaussian with scales `new_chol` sharing the old
/// mean: `½ Σ_i [(a_old/a_new)² - 1 + 2 ln(a_new/a_old)]`.
///
/// `new_chol` holds effective (post-softplus) scales and must be positive.
pub fn kl_cov(old: &GaussianHead, new_chol: &[f64]) -> Result<f64> {
    if new_chol.len() != old.dim() {
        return Err(Error::DimensionMismatch {
            expected: old.dim(),
            got: new_chol.len(),
        });
    }
    if new_chol.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::InvalidParameter("new_chol must be strictly positive".into()));
    }
    let mut acc = 0.0;
    for (&an, &c) in new_chol.iter().zip(&old.chol_raw) {
        let ao = softplus(c);
        let r = ao / an;
        acc += r * r - 1.0 + 2.0 * (an / ao).ln();
    }
    Ok(0.5 * acc)
}

/// Full diagonal-Gaussian KL, `KL(old ‖ new)`. Decomposes as
/// `kl_cov(old, a_new) + ½ Σ_i ((μ_new - μ_old)/a_new)²`.
pub fn kl_full(old: &GaussianHead, new: &GaussianHead) -> Result<f64> {
    if new.dim() != old.dim() {
        return Err(Error::DimensionMismatch {
            expected: old.dim(),
            got: new.dim(),
        });
    }
    let new_std = new.std();
    let mut mean_term = 0.0;
    for ((&mn, &mo), &an) in new.mean.iter().zip(&old.mean).zip(&new_std) {
        let z = (mn - mo) / an;
        mean_term += z * z;
    }
    Ok(kl_cov(old, &new_std)? + 0.5 * mean_term)
}
