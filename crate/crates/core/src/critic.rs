//! Step 1: policy evaluation. A 1-step TD critic with a periodically copied
//! target network, plus an exact tabular solver used as a verification
//! oracle.

use rand::Rng;

use crate::approx::{backward, forward, init_params, AdamState, NetSpec, PolicyNet};
use crate::envs::TabularMdp;
use crate::error::{Error, Result};

/// One environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Live and target Q-networks sharing one spec. The trainer syncs the target
/// every `target_period` optimizer steps.
#[derive(Debug, Clone)]
pub struct CriticPair {
    pub spec: NetSpec,
    pub live: Vec<f64>,
    pub target: Vec<f64>,
    pub steps_since_sync: usize,
}

impl CriticPair {
    pub fn init<R: Rng>(spec: NetSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        if spec.output != 1 {
            return Err(Error::InvalidParameter("critic output width must be 1".into()));
        }
        let live = init_params(&spec, rng);
        let target = live.clone();
        Ok(Self { spec, live, target, steps_since_sync: 0 })
    }

    fn q(&self, params: &[f64], state: &[f64], action: &[f64]) -> Result<f64> {
        let mut input = Vec::with_capacity(state.len() + action.len());
        input.extend_from_slice(state);
        input.extend_from_slice(action);
        Ok(forward(&self.spec, params, &input)?.output()[0])
    }

    pub fn q_live(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        self.q(&self.live, state, action)
    }

    pub fn q_target(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        self.q(&self.target, state, action)
    }

    /// Hard copy of the live parameters into the target network.
    pub fn sync_target(&mut self) {
        self.target.copy_from_slice(&self.live);
        self.steps_since_sync = 0;
    }
}

/// Bootstrapped regression targets `y = r + γ·(1-terminal)·Q'(s', a')` with
/// `a'` sampled from the policy target snapshot. `bootstrap_samples` next
/// actions are averaged (one by default).
pub fn td_targets<R: Rng>(
    pair: &CriticPair,
    policy_target: &PolicyNet,
    batch: &[Transition],
    gamma: f64,
    bootstrap_samples: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter("gamma must lie in [0, 1)".into()));
    }
    let m = bootstrap_samples.max(1);
    batch
        .iter()
        .map(|t| {
            if t.terminal {
                return Ok(t.reward);
            }
            let head = policy_target.head(&t.next_state)?;
            let mut q_next = 0.0;
            for sample in head.sample(m, rng) {
                q_next += pair.q_target(&t.next_state, &sample.action)?;
            }
            Ok(t.reward + gamma * q_next / m as f64)
        })
        .collect()
}

/// Mean squared TD error against fixed targets, and its gradient through the
/// live network only.
pub fn td_loss_grad(
    pair: &CriticPair,
    batch: &[Transition],
    targets: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if batch.len() != targets.len() {
        return Err(Error::DimensionMismatch { expected: batch.len(), got: targets.len() });
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pair.live.len()];
    for (t, &y) in batch.iter().zip(targets) {
        let mut input = Vec::with_capacity(t.state.len() + t.action.len());
        input.extend_from_slice(&t.state);
        input.extend_from_slice(&t.action);
        let cache = forward(&pair.spec, &pair.live, &input)?;
        let q = cache.output()[0];
        let resid = y - q;
        loss += resid * resid / n;
        // d/dq of (y−q)²/n
        backward(&pair.spec, &pair.live, &cache, &[-2.0 * resid / n], &mut grad)?;
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("TD loss".into()));
    }
    Ok((loss, grad))
}

/// One full TD update: sample targets, take one optimizer step on the live
/// network, bump the sync counter. Returns the batch loss.
pub fn td_step<R: Rng>(
    pair: &mut CriticPair,
    policy_target: &PolicyNet,
    batch: &[Transition],
    gamma: f64,
    bootstrap_samples: usize,
    rng: &mut R,
    opt: &mut AdamState,
) -> Result<f64> {
    let targets = td_targets(pair, policy_target, batch, gamma, bootstrap_samples, rng)?;
    let (loss, grad) = td_loss_grad(pair, batch, &targets)?;
    opt.step(&mut pair.live, &grad, false);
    pair.steps_since_sync += 1;
    Ok(loss)
}

/// Exact Q-values of a stationary policy on a tabular MDP, by value iteration
/// on `Q = r + γ P Π Q` run to a 1e-10 fixed-point bound.
pub fn exact_q_tabular(
    mdp: &TabularMdp,
    policy: &[Vec<f64>],
    gamma: f64,
) -> Result<Vec<Vec<f64>>> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter("gamma must lie in [0, 1)".into()));
    }
    mdp.validate()?;
    if policy.len() != mdp.n_states() {
        return Err(Error::DimensionMismatch { expected: mdp.n_states(), got: policy.len() });
    }
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut q = vec![vec![0.0; na]; ns];
    loop {
        let mut next = vec![vec![0.0; na]; ns];
        let mut delta: f64 = 0.0;
        for s in 0..ns {
            for a in 0..na {
                let mut boot = 0.0;
                for &(s2, p) in mdp.transitions(s, a) {
                    let v: f64 = (0..na).map(|a2| policy[s2][a2] * q[s2][a2]).sum();
                    boot += p * v;
                }
                next[s][a] = mdp.reward(s, a) + gamma * boot;
                delta = delta.max((next[s][a] - q[s][a]).abs());
            }
        }
        q = next;
        // Contraction bound: ‖Q_t − Q*‖ ≤ γ/(1−γ)·‖Q_t − Q_{t−1}‖.
        if gamma == 0.0 || delta * gamma / (1.0 - gamma) < 1e-10 {
            break;
        }
    }
    Ok(q)
}
