use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_instance, coalition_value, coalition_values, Background, ExplainError, Result,
    ScalarModel, ShapMethod, ShapValues, MAX_EXACT_FEATURES,
};

/// Coalition budget for [`kernel_shap`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSamples {
    /// Enumerate every proper, non-empty coalition.
    All,
    /// Draw this many coalitions (complement pairs) from the Shapley kernel.
    Sampled(usize),
}

/// Shapley kernel `(D-1) / (C(D,s) s (D-s))` for a coalition of size `s`.
pub fn shapley_kernel_weight(d: usize, s: usize) -> f64 {
    if s == 0 || s >= d {
        return 0.0;
    }
    let mut binom = 1.0f64;
    for i in 0..s {
        binom = binom * (d - i) as f64 / (i + 1) as f64;
    }
    (d - 1) as f64 / (binom * s as f64 * (d - s) as f64)
}

/// Kernel SHAP: weighted least squares over coalitions with the efficiency
/// constraint `sum(phi) = f(x) - base` eliminated by substitution on the
/// last feature.
pub fn kernel_shap<M: ScalarModel + ?Sized, R: Rng + ?Sized>(
    f: &M,
    x: &[f64],
    bg: &Background,
    samples: KernelSamples,
    rng: &mut R,
) -> Result<ShapValues> {
    check_instance(f, x, bg)?;
    let d = x.len();
    if d > 63 {
        return Err(ExplainError::TooManyFeatures(d));
    }
    let base_value = coalition_value(f, x, bg, 0);
    let fx = f.eval(x);
    let delta = fx - base_value;
    // Features equal to x in every background row cannot move any coalition
    // value; they get phi = 0 and the regression runs over the rest.
    let varying: Vec<usize> = (0..d)
        .filter(|&j| bg.rows().iter().any(|r| r[j] != x[j]))
        .collect();
    let dv = varying.len();
    if dv <= 1 {
        let mut phi = vec![0.0; d];
        if let Some(&j) = varying.first() {
            phi[j] = delta;
        }
        return Ok(ShapValues {
            phi,
            base_value,
            fx,
            method: ShapMethod::Kernel,
            n_samples: 0,
        });
    }
    let expand = |m: u64| {
        varying
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &j)| acc | ((m >> i & 1) << j))
    };

    let proper = (1u64 << dv) - 2;
    let coalitions: Vec<(u64, f64)> = match samples {
        KernelSamples::Sampled(n) if n < 2 * d + 2 => {
            return Err(ExplainError::InvalidInput(format!(
                "n_samples {n} below the minimum {}",
                2 * d + 2
            )))
        }
        KernelSamples::Sampled(n) if dv > MAX_EXACT_FEATURES || (n as u64) < proper => {
            sample_coalitions(dv, n, rng)
        }
        _ => (1..=proper)
            .map(|m| (m, shapley_kernel_weight(dv, m.count_ones() as usize)))
            .collect(),
    };

    let masks: Vec<u64> = coalitions.iter().map(|(m, _)| expand(*m)).collect();
    let values = coalition_values(f, x, bg, &masks);

    let last = dv - 1;
    let mut ata = DMatrix::<f64>::zeros(last, last);
    let mut atb = DVector::<f64>::zeros(last);
    let mut row = vec![0.0; last];
    for ((mask, w), v) in coalitions.iter().zip(&values) {
        let z_last = (mask >> last & 1) as f64;
        for (j, r) in row.iter_mut().enumerate() {
            *r = (mask >> j & 1) as f64 - z_last;
        }
        let y = v - base_value - z_last * delta;
        for a in 0..last {
            if row[a] == 0.0 {
                continue;
            }
            atb[a] += w * row[a] * y;
            for b in 0..last {
                ata[(a, b)] += w * row[a] * row[b];
            }
        }
    }

    let solution = ata
        .clone()
        .cholesky()
        .map(|c| c.solve(&atb))
        .or_else(|| ata.lu().solve(&atb))
        .filter(|s| s.iter().all(|v| v.is_finite()))
        .ok_or(ExplainError::SingularSystem)?;

    let mut reduced: Vec<f64> = solution.iter().copied().collect();
    reduced.push(delta - reduced.iter().sum::<f64>());
    let mut phi = vec![0.0; d];
    for (i, &j) in varying.iter().enumerate() {
        phi[j] = reduced[i];
    }
    Ok(ShapValues {
        phi,
        base_value,
        fx,
        method: ShapMethod::Kernel,
        n_samples: coalitions.len(),
    })
}

/// Draws `n` coalitions as complement pairs with size probability
/// proportional to the kernel mass `(D-1) / (s (D-s))`. Repeats accumulate
/// as integer weights; with sampling proportional to the kernel every draw
/// carries equal weight.
fn sample_coalitions<R: Rng + ?Sized>(d: usize, n: usize, rng: &mut R) -> Vec<(u64, f64)> {
    let size_mass: Vec<f64> = (1..d).map(|s| 1.0 / (s * (d - s)) as f64).collect();
    let total: f64 = size_mass.iter().sum();
    let full = (1u64 << d) - 1;
    let mut counts: BTreeMap<u64, f64> = BTreeMap::new();
    for _ in 0..n.div_ceil(2) {
        let mut u = rng.random::<f64>() * total;
        let mut size = d - 1;
        for (i, m) in size_mass.iter().enumerate() {
            if u < *m {
                size = i + 1;
                break;
            }
            u -= m;
        }
        let mask = index::sample(rng, d, size)
            .into_iter()
            .fold(0u64, |acc, j| acc | 1 << j);
        *counts.entry(mask).or_default() += 1.0;
        *counts.entry(full ^ mask).or_default() += 1.0;
    }
    counts.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::{exact_shapley, FnModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_weight_symmetric() {
        for s in 1..7 {
            assert!((shapley_kernel_weight(7, s) - shapley_kernel_weight(7, 7 - s)).abs() < 1e-15);
        }
        assert_eq!(shapley_kernel_weight(5, 0), 0.0);
        assert_eq!(shapley_kernel_weight(5, 5), 0.0);
    }

    #[test]
    fn enumeration_matches_exact_on_interactions() {
        let f = FnModel::new(5, |x| x[0] * x[1] + (x[2] - x[3]).tanh() + x[4].powi(3) * x[0]);
        let bg = Background::new(
            vec![vec![0.1, -0.3, 0.5, 0.2, 1.0], vec![-1.0, 0.4, 0.0, 0.9, -0.2]],
            "t",
        )
        .unwrap();
        let x = [0.7, 1.2, -0.4, 0.3, 0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let k = kernel_shap(&f, &x, &bg, KernelSamples::All, &mut rng).unwrap();
        let e = exact_shapley(&f, &x, &bg).unwrap();
        for j in 0..5 {
            assert!((k.phi[j] - e.phi[j]).abs() < 1e-10);
        }
        assert!(k.additivity_residual().abs() < 1e-12);
    }

    #[test]
    fn constant_model_zero_phi() {
        let f = FnModel::new(4, |_| 0.3);
        let bg = Background::new(vec![vec![1.0; 4]], "t").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let k = kernel_shap(&f, &[0.0; 4], &bg, KernelSamples::Sampled(10), &mut rng).unwrap();
        assert!(k.phi.iter().all(|p| p.abs() < 1e-12));
    }

    #[test]
    fn sampled_is_close_for_additive_model() {
        // Additive models are recovered exactly by any full-rank design.
        let w: Vec<f64> = (0..20).map(|j| (j as f64 - 9.5) / 10.0).collect();
        let wc = w.clone();
        let f = FnModel::new(20, move |x| x.iter().zip(&wc).map(|(a, b)| a * b).sum());
        let bg = Background::new(vec![vec![0.0; 20], vec![1.0; 20]], "t").unwrap();
        let x = vec![2.0; 20];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = kernel_shap(&f, &x, &bg, KernelSamples::Sampled(400), &mut rng).unwrap();
        for j in 0..20 {
            assert!((k.phi[j] - w[j] * 1.5).abs() < 1e-9, "{j}");
        }
        assert!(k.additivity_residual().abs() < 1e-10);
    }

    #[test]
    fn fixed_features_get_zero() {
        let f = FnModel::new(4, |x| x[0] * x[1] + x[2] * 10.0 + x[3]);
        let bg = Background::new(vec![vec![0.0, 1.0, 5.0, 2.0], vec![0.5, -1.0, 5.0, 1.0]], "t").unwrap();
        let x = [1.0, 2.0, 5.0, 3.0];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = kernel_shap(&f, &x, &bg, KernelSamples::Sampled(10), &mut rng).unwrap();
        let e = exact_shapley(&f, &x, &bg).unwrap();
        assert_eq!(k.phi[2], 0.0);
        for j in 0..4 {
            assert!((k.phi[j] - e.phi[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        let f = FnModel::new(4, |x| x[0]);
        let bg = Background::new(vec![vec![0.0; 4]], "t").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(kernel_shap(&f, &[1.0; 4], &bg, KernelSamples::Sampled(9), &mut rng).is_err());
    }
}
