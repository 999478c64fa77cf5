use super::{PpoError, Result};

/// Finite-horizon discounted returns `R_t = sum_k gamma^k r_{t+k}`, computed
/// backward from the episode end.
pub fn compute_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (t, r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[t] = acc;
    }
    out
}

/// Generalized advantage estimates, before normalization.
///
/// `values` carries one bootstrap entry past the last reward (0 at a
/// terminal state).
pub fn compute_gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Result<Vec<f64>> {
    if values.len() != rewards.len() + 1 {
        return Err(PpoError::LengthMismatch {
            what: "values",
            expected: rewards.len() + 1,
            got: values.len(),
        });
    }
    let mut adv = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        let delta = rewards[t] + gamma * values[t + 1] - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    Ok(adv)
}

/// Rescales to zero mean and unit variance. Left untouched for fewer than
/// two entries or variance below 1e-12.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.len() < 2 {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    if var < 1e-12 {
        return;
    }
    let std = var.sqrt();
    adv.iter_mut().for_each(|a| *a = (*a - mean) / std);
}
