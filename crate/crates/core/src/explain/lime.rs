use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ExplainError, Result, ScalarModel};

/// Standard deviations below this are treated as constant columns.
pub const STD_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    /// `z = x + sigma * g`, `g ~ N(0, I)`.
    #[default]
    Gaussian,
    /// `z_j ~ U[mu_j - 2 sigma_j, mu_j + 2 sigma_j]`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// Defaults to `0.75 * sqrt(D)` when unset.
    pub kernel_width: Option<f64>,
    pub ridge: f64,
    pub top_k: usize,
    pub perturbation: Perturbation,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self {
            n_samples: 5000,
            kernel_width: None,
            ridge: 1e-3,
            top_k: 6,
            perturbation: Perturbation::Gaussian,
        }
    }
}

/// Per-feature location and scale, usually from the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimeExplanation {
    pub intercept: f64,
    /// Surrogate slopes per standardized unit of each feature.
    pub coefficients: Vec<f64>,
    /// `(feature index, coefficient)` by descending magnitude.
    pub top_k: Vec<(usize, f64)>,
    /// Weighted R^2 of the surrogate on the perturbation sample.
    pub local_fidelity: f64,
    pub kernel_width: f64,
    pub n_samples: usize,
}

fn floored(std: &[f64]) -> Vec<f64> {
    std.iter().map(|s| s.max(STD_FLOOR)).collect()
}

/// Perturbation cloud around `x` as `(z, standardized offset (z - x) / sigma)`.
pub fn perturbations<R: Rng + ?Sized>(
    x: &[f64],
    stats: &FeatureStats,
    cfg: &LimeConfig,
    rng: &mut R,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let sigma = floored(&stats.std);
    (0..cfg.n_samples)
        .map(|_| {
            let mut z = Vec::with_capacity(x.len());
            let mut u = Vec::with_capacity(x.len());
            for j in 0..x.len() {
                let zj = match cfg.perturbation {
                    Perturbation::Gaussian => {
                        let g: f64 = rng.sample(StandardNormal);
                        x[j] + sigma[j] * g
                    }
                    Perturbation::Uniform => {
                        let r: f64 = rng.random_range(-2.0..2.0);
                        stats.mean[j] + sigma[j] * r
                    }
                };
                z.push(zj);
                u.push((zj - x[j]) / sigma[j]);
            }
            (z, u)
        })
        .collect()
}

/// Local weighted ridge surrogate around `x`.
pub fn lime_explain<M: ScalarModel + ?Sized, R: Rng + ?Sized>(
    f: &M,
    x: &[f64],
    stats: &FeatureStats,
    cfg: &LimeConfig,
    rng: &mut R,
) -> Result<LimeExplanation> {
    let d = f.n_features();
    for len in [x.len(), stats.mean.len(), stats.std.len()] {
        if len != d {
            return Err(ExplainError::DimensionMismatch { expected: d, got: len });
        }
    }
    if cfg.n_samples < 2 {
        return Err(ExplainError::InvalidInput("LIME needs at least 2 samples".into()));
    }
    let width = cfg.kernel_width.unwrap_or(0.75 * (d as f64).sqrt());
    if !(width > 0.0) || !(cfg.ridge >= 0.0) {
        return Err(ExplainError::InvalidInput("kernel_width must be > 0, ridge >= 0".into()));
    }

    let cloud = perturbations(x, stats, cfg, rng);
    let y: Vec<f64> = cloud.iter().map(|(z, _)| f.eval(z)).collect();
    let w: Vec<f64> = cloud
        .iter()
        .map(|(_, u)| (-u.iter().map(|v| v * v).sum::<f64>() / (width * width)).exp())
        .collect();
    if w.iter().all(|wi| *wi < 1e-12) {
        return Err(ExplainError::DegenerateSample);
    }

    // Constant columns stay out of the fit and report a zero coefficient.
    let active: Vec<usize> = (0..d).filter(|&j| stats.std[j] >= STD_FLOOR).collect();
    let w_sum: f64 = w.iter().sum();
    let y_bar = w.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / w_sum;
    let u_bar: Vec<f64> = active
        .iter()
        .map(|&j| w.iter().zip(&cloud).map(|(wi, (_, u))| wi * u[j]).sum::<f64>() / w_sum)
        .collect();

    let p = active.len();
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut centered = vec![0.0; p];
    for ((wi, yi), (_, u)) in w.iter().zip(&y).zip(&cloud) {
        for (c, (&j, mu)) in centered.iter_mut().zip(active.iter().zip(&u_bar)) {
            *c = u[j] - mu;
        }
        let yc = yi - y_bar;
        for a in 0..p {
            rhs[a] += wi * centered[a] * yc;
            for b in a..p {
                gram[(a, b)] += wi * centered[a] * centered[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
        gram[(a, a)] += cfg.ridge;
    }
    let beta = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .ok_or(ExplainError::SingularSystem)?;

    let mut coefficients = vec![0.0; d];
    for (k, &j) in active.iter().enumerate() {
        coefficients[j] = beta[k];
    }
    let intercept = y_bar - u_bar.iter().zip(beta.iter()).map(|(a, b)| a * b).sum::<f64>();

    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for ((wi, yi), (_, u)) in w.iter().zip(&y).zip(&cloud) {
        let pred = intercept + active.iter().map(|&j| coefficients[j] * u[j]).sum::<f64>();
        ss_res += wi * (yi - pred).powi(2);
        ss_tot += wi * (yi - y_bar).powi(2);
    }
    let local_fidelity = if ss_tot > 1e-300 { 1.0 - ss_res / ss_tot } else { 0.0 };

    let mut ranked: Vec<(usize, f64)> = coefficients.iter().copied().enumerate().collect();
    ranked.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    ranked.truncate(cfg.top_k);

    Ok(LimeExplanation {
        intercept,
        coefficients,
        top_k: ranked,
        local_fidelity,
        kernel_width: width,
        n_samples: cfg.n_samples,
    })
}
