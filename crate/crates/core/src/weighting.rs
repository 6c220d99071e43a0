//! Step 2: turning per-state Q-values of sampled actions into normalized
//! weights — exponential transform with a dual-optimized temperature, rank
//! transform, or raw identity pass-through.

use crate::error::{Error, Result};

/// States, sampled actions, their Q-values and the per-state weights produced
/// by one of the transforms. `normalized` is false only for the identity
/// transform, whose weights may be negative and do not sum to one.
#[derive(Debug, Clone)]
pub struct WeightedBatch {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<Vec<f64>>>,
    pub q_values: Vec<Vec<f64>>,
    pub weights: Vec<Vec<f64>>,
    pub normalized: bool,
}

/// Temperature η for the exponential transform together with its KL budget ε
/// and the projection floor. Persists across batches so the dual solve warm
/// starts.
#[derive(Debug, Clone, Copy)]
pub struct TemperatureState {
    pub eta: f64,
    pub epsilon: f64,
    pub eta_min: f64,
}

impl TemperatureState {
    pub fn new(eta: f64, epsilon: f64, eta_min: f64) -> Result<Self> {
        if !(eta_min > 0.0) || !(epsilon > 0.0) || !(eta >= eta_min) {
            return Err(Error::InvalidParameter(
                "require eta >= eta_min > 0 and epsilon > 0".into(),
            ));
        }
        Ok(Self { eta, epsilon, eta_min })
    }
}

fn check_finite(q_values: &[Vec<f64>]) -> Result<()> {
    for row in q_values {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Q-values".into()));
        }
    }
    Ok(())
}

/// Per-row softmax of Q-values at temperature `eta`, computed with
/// max-subtraction. Equals the closed-form solution of the KL-constrained
/// weight optimization.
pub fn exp_weights(q_values: &[Vec<f64>], eta: f64) -> Result<Vec<Vec<f64>>> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter("eta must be positive".into()));
    }
    check_finite(q_values)?;
    Ok(q_values
        .iter()
        .map(|row| {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let unnorm: Vec<f64> = row.iter().map(|&q| ((q - m) / eta).exp()).collect();
            let z: f64 = unnorm.iter().sum();
            unnorm.into_iter().map(|w| w / z).collect()
        })
        .collect())
}

/// The convex dual of the KL-constrained weight problem:
/// `g(η) = ηε + η · (1/K) Σ_j ln((1/N) Σ_i exp(q_ji/η))`.
pub fn dual_value(q_values: &[Vec<f64>], eta: f64, epsilon: f64) -> f64 {
    let k = q_values.len() as f64;
    let mut acc = eta * epsilon;
    for row in q_values {
        let n = row.len() as f64;
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&q| ((q - m) / eta).exp()).sum();
        // η·ln((1/N)Σ exp(q/η)) = m + η·ln(sum/N)
        acc += (m + eta * (sum / n).ln()) / k;
    }
    acc
}

/// Analytic derivative of [`dual_value`] with respect to η:
/// `ε + (1/K) Σ_j [ln((1/N)Σ exp(q/η)) − E_w[q]/η]` with `w = softmax(q/η)`.
pub fn dual_grad_eta(q_values: &[Vec<f64>], eta: f64, epsilon: f64) -> f64 {
    let k = q_values.len() as f64;
    let mut acc = epsilon;
    for row in q_values {
        let n = row.len() as f64;
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&q| ((q - m) / eta).exp()).collect();
        let z: f64 = exps.iter().sum();
        let lse = m / eta + (z / n).ln();
        let mean_q: f64 = row.iter().zip(&exps).map(|(&q, &e)| q * e / z).sum();
        acc += (lse - mean_q / eta) / k;
    }
    acc
}

/// Minimizes the dual over η by `steps` projected gradient updates, using the
/// analytic gradient from [`dual_grad_eta`]. Each update is backtracked until
/// it does not increase the dual, so the dual value is non-increasing across
/// the call. η is projected onto `[eta_min, ∞)` after every step.
pub fn solve_eta(
    q_values: &[Vec<f64>],
    state: TemperatureState,
    steps: usize,
    step_size: f64,
) -> TemperatureState {
    let mut eta = state.eta.max(state.eta_min);
    for _ in 0..steps {
        let g = dual_grad_eta(q_values, eta, state.epsilon);
        if g == 0.0 {
            break;
        }
        let current = dual_value(q_values, eta, state.epsilon);
        let mut step = step_size;
        loop {
            let candidate = (eta - step * g).max(state.eta_min);
            if dual_value(q_values, candidate, state.epsilon) <= current {
                eta = candidate;
                break;
            }
            step *= 0.5;
            if step < 1e-15 {
                break;
            }
        }
    }
    TemperatureState { eta, ..state }
}

/// Warm-started Adam on ln η, as run once per training batch.
#[derive(Debug, Clone)]
pub struct EtaOptimizer {
    pub state: TemperatureState,
    use_adam: bool,
    lr: f64,
    steps_per_batch: usize,
    m: f64,
    v: f64,
    t: u64,
}

impl EtaOptimizer {
    pub fn new(state: TemperatureState, use_adam: bool, lr: f64, steps_per_batch: usize) -> Self {
        Self { state, use_adam, lr, steps_per_batch, m: 0.0, v: 0.0, t: 0 }
    }

    pub fn eta(&self) -> f64 {
        self.state.eta
    }

    /// Runs the per-batch η updates. Plain-gradient mode delegates to
    /// [`solve_eta`]; Adam mode keeps moments across batches.
    pub fn update(&mut self, q_values: &[Vec<f64>]) {
        if !self.use_adam {
            self.state = solve_eta(q_values, self.state, self.steps_per_batch, self.lr);
            return;
        }
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        for _ in 0..self.steps_per_batch {
            let g = dual_grad_eta(q_values, self.state.eta, self.state.epsilon) * self.state.eta;
            self.t += 1;
            self.m = B1 * self.m + (1.0 - B1) * g;
            self.v = B2 * self.v + (1.0 - B2) * g * g;
            let mh = self.m / (1.0 - B1.powi(self.t as i32));
            let vh = self.v / (1.0 - B2.powi(self.t as i32));
            let ln_eta = self.state.eta.ln() - self.lr * mh / (vh.sqrt() + EPS);
            self.state.eta = ln_eta.exp().max(self.state.eta_min);
        }
    }
}

/// Rank-based weights: actions are ranked per row descending by Q (rank 1 is
/// best, ties broken by original sample order), the raw weight of rank `r` is
/// `ln((N + temp)/r)`, and rows are normalized to sum to one.
pub fn rank_weights(q_values: &[Vec<f64>], temp: f64) -> Result<Vec<Vec<f64>>> {
    if !(temp > 0.0) {
        // temp <= 0 would give the worst rank a non-positive raw weight.
        return Err(Error::InvalidParameter("rank temperature must be positive".into()));
    }
    check_finite(q_values)?;
    Ok(q_values
        .iter()
        .map(|row| {
            let n = row.len();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap());
            let mut raw = vec![0.0; n];
            for (rank0, &idx) in order.iter().enumerate() {
                raw[idx] = ((n as f64 + temp) / (rank0 as f64 + 1.0)).ln();
            }
            let z: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / z).collect()
        })
        .collect())
}

/// Identity transform: weights are the Q-values verbatim. The result is not a
/// distribution (may be negative, unnormalized); callers must flag the batch
/// as non-normalized.
pub fn identity_weights(q_values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    q_values.to_vec()
}

/// Per-row sample KL against the uniform distribution, `Σ_i q_i ln(q_i N)`,
/// averaged over rows. This is the quantity the ε budget bounds.
pub fn sample_kl_vs_uniform(weights: &[Vec<f64>]) -> f64 {
    let k = weights.len() as f64;
    weights
        .iter()
        .map(|row| {
            let n = row.len() as f64;
            row.iter()
                .map(|&w| if w > 0.0 { w * (w * n).ln() } else { 0.0 })
                .sum::<f64>()
        })
        .sum::<f64>()
        / k
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state(eta: f64, eps: f64) -> TemperatureState {
        TemperatureState::new(eta, eps, 1e-8).unwrap()
    }

    #[test]
    fn exp_weights_uniform_on_equal_row() {
        let w = exp_weights(&[vec![2.0; 5]], 1.0).unwrap();
        for &wi in &w[0] {
            assert!((wi - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn exp_weights_two_value_row() {
        let w = exp_weights(&[vec![1.0, 0.0]], 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((w[0][0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((w[0][1] - 1.0 / (e + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn exp_weights_infinite_temperature_limit() {
        let w = exp_weights(&[vec![3.0, -1.0, 0.5]], 1e9).unwrap();
        for &wi in &w[0] {
            assert!((wi - 1.0 / 3.0).abs() < 1e-6);
        }
    }

    #[test]
    fn exp_weights_rejects_bad_inputs() {
        assert!(exp_weights(&[vec![1.0]], 0.0).is_err());
        assert!(exp_weights(&[vec![f64::NAN]], 1.0).is_err());
    }

    #[test]
    fn dual_constant_row_collapses() {
        for &eta in &[0.3, 1.0, 7.0] {
            let g = dual_value(&[vec![2.5, 2.5]], eta, 0.1);
            assert!((g - (eta * 0.1 + 2.5)).abs() < 1e-12, "eta={eta}");
        }
    }

    #[test]
    fn dual_two_value_example() {
        let g = dual_value(&[vec![1.0, 0.0]], 1.0, 0.1);
        let want = 0.1 + ((std::f64::consts::E + 1.0) / 2.0).ln();
        assert!((g - want).abs() < 1e-12);
        assert!((g - 0.7201).abs() < 1e-4);
    }

    #[test]
    fn dual_is_convex_on_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..6).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let etas: Vec<f64> = (0..40).map(|i| 10f64.powf(-3.0 + i as f64 * 0.15)).collect();
        for w in etas.windows(3) {
            let (a, b, c) = (w[0], w[1], w[2]);
            // Midpoint convexity on the η axis itself requires b = (a+c)/2;
            // use the three grid points with the chord through (a, c).
            let fa = dual_value(&q, a, 0.1);
            let fb = dual_value(&q, b, 0.1);
            let fc = dual_value(&q, c, 0.1);
            let t = (b - a) / (c - a);
            assert!(fb <= (1.0 - t) * fa + t * fc + 1e-9);
        }
    }

    #[test]
    fn dual_gradient_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let q: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..5).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect();
            let eta = rng.random_range(0.05..5.0);
            let g = dual_grad_eta(&q, eta, 0.1);
            let fd = verify::finite_diff_grad(|x| dual_value(&q, x[0], 0.1), &[eta], 1e-6)[0];
            assert!(
                verify::max_rel_err(&[g], &[fd]) < 1e-6,
                "eta={eta} analytic={g} fd={fd}"
            );
        }
    }

    #[test]
    fn solve_eta_constant_rows_hits_floor() {
        // Constant rows make the dual gradient equal ε > 0 everywhere, so η
        // descends onto the projection floor.
        let q = vec![vec![1.0, 1.0], vec![-2.0, -2.0]];
        let out = solve_eta(&q, state(1.0, 0.1), 500, 0.5);
        assert!(out.eta >= 1e-8);
        assert!(out.eta <= 1e-8 + 1e-12, "eta={}", out.eta);
    }

    #[test]
    fn solve_eta_projection_floor_survives_huge_steps() {
        let q = vec![vec![1.0, 0.0]];
        let out = solve_eta(&q, state(1.0, 0.1), 50, 1e6);
        assert!(out.eta >= 1e-8);
    }

    #[test]
    fn solve_eta_never_increases_dual() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let q: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..4).map(|_| rng.random_range(-5.0..5.0)).collect())
                .collect();
            let s = state(rng.random_range(0.01..10.0), 0.1);
            let before = dual_value(&q, s.eta, s.epsilon);
            let out = solve_eta(&q, s, 200, 0.3);
            let after = dual_value(&q, out.eta, out.epsilon);
            assert!(after <= before + 1e-9, "dual rose: {before} -> {after}");
        }
    }

    #[test]
    fn solve_eta_matches_golden_section_oracle() {
        let q = vec![vec![1.0, 0.0]];
        let eps = 0.1;
        let solved = solve_eta(&q, state(1.0, eps), 20_000, 0.1).eta;
        let oracle = verify::golden_section_min(
            |ln_eta| dual_value(&q, ln_eta.exp(), eps),
            (1e-8f64).ln(),
            (1e6f64).ln(),
            200,
        )
        .exp();
        assert!(
            (solved - oracle).abs() / oracle.max(1e-8) < 1e-3,
            "solved={solved} oracle={oracle}"
        );
        // At the optimum the sample-KL budget is met.
        let w = exp_weights(&q, solved).unwrap();
        assert!(sample_kl_vs_uniform(&w) <= eps + 1e-6);
    }

    #[test]
    fn rank_weights_paper_setting() {
        let n = 20usize;
        let temp = 10.0;
        let q: Vec<f64> = (0..n).map(|i| -(i as f64)).collect(); // descending, rank = index+1
        let w = rank_weights(&[q], temp).unwrap();
        // Independent direct summation of the normalizer.
        let z: f64 = (1..=n).map(|i| (30.0 / i as f64).ln()).sum();
        let want = 30f64.ln() / z;
        assert!((w[0][0] - want).abs() < 1e-12);
        let total: f64 = w[0].iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_weights_strictly_decreasing_in_rank() {
        let w = rank_weights(&[vec![0.1, 5.0]], 3.7).unwrap();
        assert!(w[0][1] > w[0][0]);
        let w = rank_weights(&[vec![3.0, 1.0, 2.0]], 1.0).unwrap();
        assert!(w[0][0] > w[0][2] && w[0][2] > w[0][1]);
    }

    #[test]
    fn rank_weights_ties_use_stable_sample_order() {
        let w = rank_weights(&[vec![1.0, 1.0, 0.0]], 2.0).unwrap();
        // Equal Q-values keep original order: sample 0 gets rank 1, sample 1 rank 2.
        assert!(w[0][0] > w[0][1]);
        assert!(w[0][1] > w[0][2]);
    }

    #[test]
    fn rank_weights_rejects_nonpositive_temp() {
        assert!(rank_weights(&[vec![1.0, 0.0]], 0.0).is_err());
        assert!(rank_weights(&[vec![1.0, 0.0]], -1.0).is_err());
    }

    #[test]
    fn identity_weights_verbatim() {
        let q = vec![vec![3.0, -1.0], vec![0.0, 0.0]];
        let w = identity_weights(&q);
        assert_eq!(w, q);
        for (row_w, row_q) in w.iter().zip(&q) {
            for (a, b) in row_w.iter().zip(row_q) {
                assert_eq!(a.signum(), b.signum());
            }
        }
    }

    #[test]
    fn transforms_agree_on_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let q: Vec<Vec<f64>> =
                vec![(0..6).map(|_| rng.random_range(-4.0..4.0)).collect()];
            let argmax_q = |row: &[f64]| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0
            };
            let best = argmax_q(&q[0]);
            let we = exp_weights(&q, 0.7).unwrap();
            let wr = rank_weights(&q, 10.0).unwrap();
            let wi = identity_weights(&q);
            assert_eq!(argmax_q(&we[0]), best);
            assert_eq!(argmax_q(&wr[0]), best);
            assert_eq!(argmax_q(&wi[0]), best);
        }
    }

    #[test]
    fn kl_budget_satisfied_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..25 {
            let q: Vec<Vec<f64>> =
                vec![(0..3).map(|_| rng.random_range(-3.0..3.0)).collect()];
            let eps = 0.1;
            let solved = solve_eta(&q, state(1.0, eps), 5000, 0.1);
            let w = exp_weights(&q, solved.eta).unwrap();
            assert!(sample_kl_vs_uniform(&w) <= eps + 1e-6);
        }
    }

    proptest! {
        #[test]
        fn exp_weights_shift_invariant(
            base in proptest::collection::vec(-5.0..5.0f64, 2..8),
            shift in -10.0..10.0f64,
            eta in 0.1..5.0f64,
        ) {
            let shifted: Vec<f64> = base.iter().map(|&q| q + shift).collect();
            let a = exp_weights(&[base], eta).unwrap();
            let b = exp_weights(&[shifted], eta).unwrap();
            for (x, y) in a[0].iter().zip(&b[0]) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn normalized_transforms_sum_to_one(
            row in proptest::collection::vec(-5.0..5.0f64, 2..10),
            eta in 0.05..10.0f64,
        ) {
            let we = exp_weights(&[row.clone()], eta).unwrap();
            let wr = rank_weights(&[row], 10.0).unwrap();
            prop_assert!((we[0].iter().sum::<f64>() - 1.0).abs() < 1e-10);
            prop_assert!((wr[0].iter().sum::<f64>() - 1.0).abs() < 1e-10);
            prop_assert!(we[0].iter().all(|&w| w >= 0.0));
            prop_assert!(wr[0].iter().all(|&w| w >= 0.0));
        }
    }
}
