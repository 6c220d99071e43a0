//! KL-regularized policy iteration.
//!
//! The training loop alternates three steps: (1) policy evaluation — a
//! TD(0) critic with a periodically synced target network, or an exact
//! oracle Q-function on benchmark tasks; (2) a non-parametric re-weighting
//! of actions sampled from the previous policy, via a softmax at a
//! dual-optimized temperature, a rank transform, or the raw identity; and
//! (3) fitting the parametric Gaussian policy to the weighted samples by
//! constrained maximum likelihood, with decoupled trust regions for the
//! mean and the covariance.
//!
//! The crate also ships closed-form interpolation updates for the stateless
//! (bandit) case, recovering evolution-strategy style optimizers, plus the
//! benchmark environments, a replay buffer, and the CSV/CLI experiment
//! harness.

pub mod approx;
pub mod envs;
pub mod error;
pub mod es;
pub mod fitting;
pub mod gauss;
pub mod harness;
pub mod trainer;
pub mod verify;
pub mod weighting;

pub mod critic;

pub use error::{Error, Result};
