//! Benchmark environments: stateful sphere/Rosenbrock oracles with exact
//! Q-functions, a small episodic point-mass task, a tabular MDP for critic
//! verification, and the uniform replay buffer.

mod replay;

pub use replay::ReplayBuffer;

use rand::Rng;

use crate::error::{Error, Result};

/// Exact sphere Q-value: `-Σ (a_i + s_i)²`, maximal (zero) at `a = -s`.
pub fn sphere_q(state: &[f64], action: &[f64]) -> Result<f64> {
    if state.len() != action.len() {
        return Err(Error::DimensionMismatch { expected: state.len(), got: action.len() });
    }
    Ok(-state.iter().zip(action).map(|(&s, &a)| (a + s) * (a + s)).sum::<f64>())
}

/// Which last term the Rosenbrock oracle uses. `Standard` is the usual
/// `(1 - y_i)²` with optimum at `y = 1`; `PaperVerbatim` keeps the unsquared
/// `(1 - y_i²)` variant, which is unbounded above and kept only for
/// comparison runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RosenbrockForm {
    Standard,
    PaperVerbatim,
}

/// Exact Rosenbrock Q-value on `y = a + s`:
/// `-Σ_{i<d} [100(y_{i+1} - y_i²)² + last(y_i)]`.
pub fn rosenbrock_q(state: &[f64], action: &[f64], form: RosenbrockForm) -> Result<f64> {
    if state.len() != action.len() {
        return Err(Error::DimensionMismatch { expected: state.len(), got: action.len() });
    }
    if state.len() < 2 {
        return Err(Error::InvalidParameter("rosenbrock needs dimension >= 2".into()));
    }
    let y: Vec<f64> = state.iter().zip(action).map(|(&s, &a)| a + s).collect();
    let mut acc = 0.0;
    for i in 0..y.len() - 1 {
        let coupling = y[i + 1] - y[i] * y[i];
        let last = match form {
            RosenbrockForm::Standard => (1.0 - y[i]) * (1.0 - y[i]),
            RosenbrockForm::PaperVerbatim => 1.0 - y[i] * y[i],
        };
        acc += 100.0 * coupling * coupling + last;
    }
    Ok(-acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleKind {
    Sphere,
    Rosenbrock,
}

/// A benchmark task whose exact Q-function is available in closed form,
/// with states drawn uniformly from `[-2, 2]^d`.
#[derive(Debug, Clone)]
pub struct OracleTask {
    pub kind: OracleKind,
    pub dim: usize,
    pub form: RosenbrockForm,
}

impl OracleTask {
    pub fn new(kind: OracleKind, dim: usize) -> Result<Self> {
        match kind {
            OracleKind::Sphere if dim < 1 => {
                return Err(Error::InvalidParameter("sphere needs dimension >= 1".into()))
            }
            OracleKind::Rosenbrock if dim < 2 => {
                return Err(Error::InvalidParameter("rosenbrock needs dimension >= 2".into()))
            }
            _ => {}
        }
        Ok(Self { kind, dim, form: RosenbrockForm::Standard })
    }

    pub fn with_form(mut self, form: RosenbrockForm) -> Self {
        self.form = form;
        self
    }

    pub fn q(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        match self.kind {
            OracleKind::Sphere => sphere_q(state, action),
            OracleKind::Rosenbrock => rosenbrock_q(state, action, self.form),
        }
    }

    /// The maximizing action of the standard forms: `a* = -s` for the sphere
    /// (optimum value 0) and `a* = 1 - s` for the Rosenbrock (y = 1,
    /// optimum value 0).
    pub fn optimal_action(&self, state: &[f64]) -> Vec<f64> {
        match self.kind {
            OracleKind::Sphere => state.iter().map(|&s| -s).collect(),
            OracleKind::Rosenbrock => state.iter().map(|&s| 1.0 - s).collect(),
        }
    }

    pub fn optimum_value(&self) -> f64 {
        0.0
    }

    /// I.i.d. uniform states on the `[-2, 2]` hypercube.
    pub fn sample_states<R: Rng>(&self, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| (0..self.dim).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect()
    }
}

/// Episodic 2-D point mass: reach the origin. Dynamics `s' = s + 0.1·a`,
/// reward `-|s|² - 0.01|a|²`, fixed horizon of 50 steps with the final step
/// marked terminal.
#[derive(Debug, Clone)]
pub struct PointMass {
    state: Vec<f64>,
    steps: usize,
    active: bool,
}

pub const POINT_MASS_HORIZON: usize = 50;

impl PointMass {
    pub fn new() -> Self {
        Self { state: vec![0.0; 2], steps: 0, active: false }
    }

    pub fn state_dim(&self) -> usize {
        2
    }

    pub fn action_dim(&self) -> usize {
        2
    }

    pub fn horizon(&self) -> usize {
        POINT_MASS_HORIZON
    }

    pub fn reset<R: Rng>(&mut self, rng: &mut R) -> Vec<f64> {
        self.state = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        self.steps = 0;
        self.active = true;
        self.state.clone()
    }

    /// Returns `(reward, next_state, terminal)`.
    pub fn step(&mut self, action: &[f64]) -> Result<(f64, Vec<f64>, bool)> {
        if !self.active {
            return Err(Error::InvalidParameter("step called on a finished episode".into()));
        }
        if action.len() != 2 {
            return Err(Error::DimensionMismatch { expected: 2, got: action.len() });
        }
        let reward = -self.state.iter().map(|s| s * s).sum::<f64>()
            - 0.01 * action.iter().map(|a| a * a).sum::<f64>();
        for (s, a) in self.state.iter_mut().zip(action) {
            *s += 0.1 * a;
        }
        self.steps += 1;
        let terminal = self.steps >= POINT_MASS_HORIZON;
        if terminal {
            self.active = false;
        }
        Ok((reward, self.state.clone(), terminal))
    }
}

impl Default for PointMass {
    fn default() -> Self {
        Self::new()
    }
}

/// Finite MDP with sparse transition lists, used as a policy-evaluation
/// oracle.
#[derive(Debug, Clone)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// `transition[s][a]` lists `(next_state, probability)`.
    transition: Vec<Vec<Vec<(usize, f64)>>>,
    reward: Vec<Vec<f64>>,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<Vec<Vec<(usize, f64)>>>,
        reward: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mdp = Self { n_states, n_actions, transition, reward };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Chain with two actions: action 0 steps left, action 1 steps right,
    /// clamped at the ends.
    pub fn deterministic_chain(n_states: usize, reward: Vec<Vec<f64>>) -> Self {
        let transition = (0..n_states)
            .map(|s| {
                vec![
                    vec![(s.saturating_sub(1), 1.0)],
                    vec![((s + 1).min(n_states - 1), 1.0)],
                ]
            })
            .collect();
        Self { n_states, n_actions: 2, transition, reward }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_actions == 0 {
            return Err(Error::InvalidParameter("MDP must have states and actions".into()));
        }
        if self.transition.len() != self.n_states || self.reward.len() != self.n_states {
            return Err(Error::InvalidParameter("MDP table sizes disagree".into()));
        }
        for s in 0..self.n_states {
            if self.transition[s].len() != self.n_actions
                || self.reward[s].len() != self.n_actions
            {
                return Err(Error::InvalidParameter("MDP table sizes disagree".into()));
            }
            for a in 0..self.n_actions {
                let total: f64 = self.transition[s][a].iter().map(|&(_, p)| p).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidParameter(format!(
                        "transition probabilities from ({s},{a}) sum to {total}"
                    )));
                }
                if self.transition[s][a].iter().any(|&(s2, _)| s2 >= self.n_states) {
                    return Err(Error::InvalidParameter("transition to unknown state".into()));
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn transitions(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.transition[s][a]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s][a]
    }

    /// Simulates one step under the given action. Probabilistic branches are
    /// resolved with the provided rng.
    pub fn step<R: Rng>(&self, s: usize, a: usize, rng: &mut R) -> (usize, f64) {
        let mut u: f64 = rng.random_range(0.0..1.0);
        let mut next = self.transition[s][a].last().unwrap().0;
        for &(s2, p) in &self.transition[s][a] {
            if u < p {
                next = s2;
                break;
            }
            u -= p;
        }
        (next, self.reward[s][a])
    }
}
