use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ExplainError, Result, ScalarModel};
use crate::market_data::INDICATORS;
use crate::seed::rng_for;

pub const IMPORTANCE_METRIC: &str = "mean_abs_prediction_change";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub values: Vec<f64>,
    /// Standard deviation across repeats.
    pub std: Vec<f64>,
    pub n_repeats: usize,
    pub metric: String,
    /// Mean prediction over the unpermuted data.
    pub baseline: f64,
}

/// Mean absolute prediction change when one column is shuffled, averaged
/// over `n_repeats` independent shuffles. Each `(column, repeat)` draws from
/// its own stream derived from `seed`.
pub fn permutation_importance<M: ScalarModel + ?Sized>(
    f: &M,
    data: &[Vec<f64>],
    n_repeats: usize,
    seed: u64,
) -> Result<ImportanceVector> {
    let m = data.len();
    if m < 2 {
        return Err(ExplainError::DegenerateData(m));
    }
    let d = f.n_features();
    if let Some(bad) = data.iter().find(|r| r.len() != d) {
        return Err(ExplainError::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    if n_repeats == 0 {
        return Err(ExplainError::InvalidInput("n_repeats must be >= 1".into()));
    }
    let base: Vec<f64> = data.par_iter().map(|x| f.eval(x)).collect();
    let baseline = base.iter().sum::<f64>() / m as f64;

    let per_column: Vec<(f64, f64)> = (0..d)
        .into_par_iter()
        .map(|j| {
            let mut scores = Vec::with_capacity(n_repeats);
            let mut row = vec![0.0; d];
            for r in 0..n_repeats {
                let mut rng = rng_for(seed, &[j as u64, r as u64]);
                let mut perm: Vec<usize> = (0..m).collect();
                perm.shuffle(&mut rng);
                let mut total = 0.0;
                for (i, x) in data.iter().enumerate() {
                    row.copy_from_slice(x);
                    row[j] = data[perm[i]][j];
                    total += (base[i] - f.eval(&row)).abs();
                }
                scores.push(total / m as f64);
            }
            let mean = scores.iter().sum::<f64>() / n_repeats as f64;
            let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n_repeats as f64;
            (mean, var.sqrt())
        })
        .collect();

    Ok(ImportanceVector {
        values: per_column.iter().map(|p| p.0).collect(),
        std: per_column.iter().map(|p| p.1).collect(),
        n_repeats,
        metric: IMPORTANCE_METRIC.to_string(),
        baseline,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    Asset,
    Indicator,
}

/// Splits `<TICKER>_<indicator>_L1` into ticker and indicator.
fn parse_name(name: &str) -> Result<(&str, &str)> {
    name.strip_suffix("_L1")
        .and_then(|stem| stem.rsplit_once('_'))
        .filter(|(ticker, ind)| !ticker.is_empty() && INDICATORS.contains(ind))
        .ok_or_else(|| ExplainError::UnparsableName(name.to_string()))
}

/// Mean importance per ticker or per indicator, sorted descending with ties
/// broken by group name.
pub fn aggregate_importance(
    iv: &ImportanceVector,
    names: &[String],
    by: GroupBy,
) -> Result<Vec<(String, f64)>> {
    if names.len() != iv.values.len() {
        return Err(ExplainError::DimensionMismatch {
            expected: iv.values.len(),
            got: names.len(),
        });
    }
    let mut groups: Vec<(String, f64, usize)> = Vec::new();
    for (name, v) in names.iter().zip(&iv.values) {
        let (ticker, ind) = parse_name(name)?;
        let key = match by {
            GroupBy::Asset => ticker,
            GroupBy::Indicator => ind,
        };
        match groups.iter_mut().find(|g| g.0 == key) {
            Some(g) => {
                g.1 += v;
                g.2 += 1;
            }
            None => groups.push((key.to_string(), *v, 1)),
        }
    }
    let mut out: Vec<(String, f64)> = groups
        .into_iter()
        .map(|(k, sum, n)| (k, sum / n as f64))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}
