//! Independent numerical oracles: quadrature, golden-section search, and
//! central finite differences. These deliberately avoid the closed-form code
//! paths they are used to cross-check, and back both the test suites and the
//! CLI `check` subcommand.

/// Composite Simpson integration of `f` over `[lo, hi]` with `2n` intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
    let m = 2 * n;
    let h = (hi - lo) / m as f64;
    let mut acc = f(lo) + f(hi);
    for i in 1..m {
        let x = lo + i as f64 * h;
        acc += f(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// KL(N(mu0, s0²) ‖ N(mu1, s1²)) by numerical quadrature of the integrand
/// `p(x) ln(p(x)/q(x))`, evaluated in log space.
pub fn kl_gaussian_quadrature(mu0: f64, s0: f64, mu1: f64, s1: f64) -> f64 {
    let ln_p = |x: f64| {
        let z = (x - mu0) / s0;
        -0.5 * z * z - s0.ln() - 0.5 * crate::gauss::LN_2PI
    };
    let ln_q = |x: f64| {
        let z = (x - mu1) / s1;
        -0.5 * z * z - s1.ln() - 0.5 * crate::gauss::LN_2PI
    };
    let spread = s0.max(s1);
    let lo = mu0.min(mu1) - 14.0 * spread;
    let hi = mu0.max(mu1) + 14.0 * spread;
    simpson(|x| ln_p(x).exp() * (ln_p(x) - ln_q(x)), lo, hi, 20_000)
}

/// Minimizes a scalar function over `[lo, hi]` by golden-section search.
/// Returns the abscissa of the minimum.
pub fn golden_section_min<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, iters: usize) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn finite_diff_grad<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    grad
}

/// Worst per-coordinate relative discrepancy between two gradients.
///
/// Each coordinate is normalized by `max(|a_i| + |b_i|, 1e-4)`, so
/// coordinates whose true gradient is tiny are compared absolutely against a
/// 1e-4 floor rather than amplifying finite-difference noise.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &b)| (a - b).abs() / (a.abs() + b.abs()).max(1e-4))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_polynomials_exactly() {
        // Simpson is exact on cubics.
        let got = simpson(|x| x * x * x - 2.0 * x + 1.0, -1.0, 3.0, 50);
        // ∫ = x⁴/4 - x² + x over [-1, 3] = (81/4 - 9 + 3) - (1/4 - 1 - 1)
        let want = (81.0 / 4.0 - 9.0 + 3.0) - (0.25 - 2.0);
        assert!((got - want).abs() < 1e-10);
    }

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let x = golden_section_min(|x| (x - 1.7) * (x - 1.7), -10.0, 10.0, 100);
        assert!((x - 1.7).abs() < 1e-9);
    }

    #[test]
    fn finite_diff_matches_analytic_on_quadratic() {
        let f = |x: &[f64]| x[0] * x[0] + 3.0 * x[0] * x[1];
        let g = finite_diff_grad(f, &[1.0, 2.0], 1e-6);
        assert!((g[0] - (2.0 + 6.0)).abs() < 1e-6);
        assert!((g[1] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn kl_quadrature_on_known_value() {
        // KL(N(0,1) ‖ N(1,1)) = 0.5
        let kl = kl_gaussian_quadrature(0.0, 1.0, 1.0, 1.0);
        assert!((kl - 0.5).abs() < 1e-10);
    }
}
