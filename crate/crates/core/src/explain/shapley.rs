use serde::{Deserialize, Serialize};

use super::{check_instance, coalition_values, Background, ExplainError, Result, ScalarModel};

/// Largest feature count [`exact_shapley`] will enumerate.
pub const MAX_EXACT_FEATURES: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapMethod {
    Exact,
    Kernel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapValues {
    pub phi: Vec<f64>,
    /// Mean of `f` over the background.
    pub base_value: f64,
    pub fx: f64,
    pub method: ShapMethod,
    /// Coalitions evaluated.
    pub n_samples: usize,
}

impl ShapValues {
    /// `base_value + sum(phi) - fx`.
    pub fn additivity_residual(&self) -> f64 {
        self.base_value + self.phi.iter().sum::<f64>() - self.fx
    }
}

/// Shapley values by full coalition enumeration:
/// `phi_j = sum_{S without j} |S|! (D-|S|-1)! / D! * (v(S + j) - v(S))`.
pub fn exact_shapley<M: ScalarModel + ?Sized>(f: &M, x: &[f64], bg: &Background) -> Result<ShapValues> {
    check_instance(f, x, bg)?;
    let d = x.len();
    if d > MAX_EXACT_FEATURES {
        return Err(ExplainError::TooManyFeatures(d));
    }
    let masks: Vec<u64> = (0..1u64 << d).collect();
    let v = coalition_values(f, x, bg, &masks);

    // weight(s) = s! (d-s-1)! / d! = 1 / (d * C(d-1, s))
    let mut binom = vec![1.0f64; d];
    for s in 1..d {
        binom[s] = binom[s - 1] * (d - s) as f64 / s as f64;
    }
    let weight: Vec<f64> = binom.iter().map(|c| 1.0 / (d as f64 * c)).collect();

    let mut phi = vec![0.0; d];
    for (j, p) in phi.iter_mut().enumerate() {
        let bit = 1u64 << j;
        let mut acc = 0.0;
        for mask in masks.iter().copied().filter(|m| m & bit == 0) {
            acc += weight[mask.count_ones() as usize] * (v[(mask | bit) as usize] - v[mask as usize]);
        }
        *p = acc;
    }

    Ok(ShapValues {
        phi,
        base_value: v[0],
        fx: f.eval(x),
        method: ShapMethod::Exact,
        n_samples: masks.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::FnModel;

    fn bg(rows: Vec<Vec<f64>>) -> Background {
        Background::new(rows, "test").unwrap()
    }

    #[test]
    fn constant_model_has_zero_phi() {
        let f = FnModel::new(3, |_| 0.7);
        let s = exact_shapley(&f, &[1.0, 2.0, 3.0], &bg(vec![vec![0.0; 3], vec![5.0; 3]])).unwrap();
        assert_eq!(s.phi, vec![0.0; 3]);
        assert_eq!(s.base_value, 0.7);
    }

    #[test]
    fn linear_model_closed_form() {
        let w = [2.0, -1.0, 0.5, 3.0];
        let f = FnModel::new(4, move |x| x.iter().zip(&w).map(|(a, b)| a * b).sum());
        let rows = vec![vec![0.1, 0.2, 0.3, 0.4], vec![1.0, -1.0, 2.0, 0.0], vec![0.5, 0.5, 0.5, 0.5]];
        let x = [1.0, 2.0, -1.0, 0.25];
        let s = exact_shapley(&f, &x, &bg(rows.clone())).unwrap();
        for j in 0..4 {
            let mean: f64 = rows.iter().map(|r| r[j]).sum::<f64>() / 3.0;
            assert!((s.phi[j] - w[j] * (x[j] - mean)).abs() < 1e-12);
        }
        assert!(s.additivity_residual().abs() < 1e-12);
    }

    #[test]
    fn duplicated_features_share_equally() {
        let f = FnModel::new(3, |x| (x[0] + x[1]).powi(2) + x[2]);
        let s = exact_shapley(&f, &[1.0, 1.0, 0.0], &bg(vec![vec![0.0, 0.0, 1.0]])).unwrap();
        assert_eq!(s.phi[0], s.phi[1]);
    }

    #[test]
    fn too_many_features() {
        let f = FnModel::new(16, |_| 0.0);
        assert_eq!(
            exact_shapley(&f, &[0.0; 16], &bg(vec![vec![0.0; 16]])).unwrap_err(),
            ExplainError::TooManyFeatures(16)
        );
    }
}
