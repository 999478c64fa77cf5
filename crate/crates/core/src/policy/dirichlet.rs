//! Dirichlet log-density, entropy and their derivatives in the
//! concentration parameters.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use statrs::function::gamma::{digamma, ln_gamma};

/// Smallest component a sampled action may take before renormalization.
pub const SAMPLE_FLOOR: f64 = 1e-8;

pub fn log_density(alpha: &[f64], x: &[f64]) -> f64 {
    let total: f64 = alpha.iter().sum();
    let mut lp = ln_gamma(total);
    for (a, xi) in alpha.iter().zip(x) {
        lp += (a - 1.0) * xi.ln() - ln_gamma(*a);
    }
    lp
}

/// d log p / d alpha_i = psi(sum alpha) - psi(alpha_i) + ln x_i.
pub fn log_density_grad(alpha: &[f64], x: &[f64]) -> Vec<f64> {
    let psi_total = digamma(alpha.iter().sum());
    alpha
        .iter()
        .zip(x)
        .map(|(a, xi)| psi_total - digamma(*a) + xi.ln())
        .collect()
}

pub fn entropy(alpha: &[f64]) -> f64 {
    let k = alpha.len() as f64;
    let total: f64 = alpha.iter().sum();
    let ln_beta: f64 = alpha.iter().map(|a| ln_gamma(*a)).sum::<f64>() - ln_gamma(total);
    ln_beta + (total - k) * digamma(total)
        - alpha.iter().map(|a| (a - 1.0) * digamma(*a)).sum::<f64>()
}

/// dH / d alpha_i = (sum alpha - K) psi'(sum alpha) - (alpha_i - 1) psi'(alpha_i).
pub fn entropy_grad(alpha: &[f64]) -> Vec<f64> {
    let k = alpha.len() as f64;
    let total: f64 = alpha.iter().sum();
    let common = (total - k) * trigamma(total);
    alpha.iter().map(|a| common - (a - 1.0) * trigamma(*a)).collect()
}

/// Trigamma for positive arguments: recurrence up to 10, then the
/// asymptotic series.
pub fn trigamma(mut x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv
        + inv2 / 2.0
        + inv * inv2
            * (1.0 / 6.0
                + inv2 * (-1.0 / 30.0 + inv2 * (1.0 / 42.0 + inv2 * (-1.0 / 30.0 + inv2 * 5.0 / 66.0))))
}

/// Draws from Dirichlet(alpha) by normalizing Gamma(alpha_i, 1) variates,
/// then floors every component at [`SAMPLE_FLOOR`] and renormalizes.
pub fn sample<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let mut draws: Vec<f64> = alpha
        .iter()
        .map(|a| Gamma::new(*a, 1.0).expect("concentration must be positive").sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    if !(total > 0.0) {
        draws.iter_mut().for_each(|d| *d = 1.0);
    } else {
        draws.iter_mut().for_each(|d| *d /= total);
    }
    draws.iter_mut().for_each(|d| *d = d.max(SAMPLE_FLOOR));
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn symmetric_density_at_mean() {
        // Dirichlet(2,2,2) at (1/3,1/3,1/3): Gamma(6)/Gamma(2)^3 * (1/27) = 120/27.
        let lp = log_density(&[2.0; 3], &[1.0 / 3.0; 3]);
        assert!((lp - (120.0f64 / 27.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn uniform_dirichlet_is_flat() {
        // Dirichlet(1,...,1) on the K-simplex has density (K-1)!.
        let lp = log_density(&[1.0; 4], &[0.1, 0.2, 0.3, 0.4]);
        assert!((lp - 6.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn trigamma_known_values() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((trigamma(1.0) - pi2_6).abs() < 1e-12);
        assert!((trigamma(0.5) - std::f64::consts::PI.powi(2) / 2.0).abs() < 1e-12);
        assert!((trigamma(2.0) - (pi2_6 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let alpha = [1.3, 2.7, 4.1];
        let x = [0.2, 0.5, 0.3];
        let g = log_density_grad(&alpha, &x);
        let h = entropy_grad(&alpha);
        let eps = 1e-6;
        for i in 0..3 {
            let mut up = alpha;
            let mut dn = alpha;
            up[i] += eps;
            dn[i] -= eps;
            let fd = (log_density(&up, &x) - log_density(&dn, &x)) / (2.0 * eps);
            assert!((fd - g[i]).abs() < 1e-7, "logp {i}: {fd} vs {}", g[i]);
            let fd = (entropy(&up) - entropy(&dn)) / (2.0 * eps);
            assert!((fd - h[i]).abs() < 1e-7, "entropy {i}: {fd} vs {}", h[i]);
        }
    }

    #[test]
    fn beta_entropy_closed_form() {
        // Beta(1,1) is uniform on [0,1]: entropy 0.
        assert!(entropy(&[1.0, 1.0]).abs() < 1e-12);
    }

    #[test]
    fn samples_concentrate_for_large_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let s = sample(&[1e6; 4], &mut rng);
            assert!(s.iter().all(|v| (v - 0.25).abs() < 0.01));
        }
    }
}
