use serde::{Deserialize, Serialize};

use super::{ExplainError, Result};

/// Signed contributions around the base value, as drawn in a force plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcePlotData {
    pub base_value: f64,
    pub fx: f64,
    /// Features pushing the prediction up, largest first.
    pub positive: Vec<(String, f64)>,
    /// Features pushing the prediction down, largest magnitude first.
    pub negative: Vec<(String, f64)>,
    /// Set when the plot shows a single feature.
    pub feature: Option<String>,
    /// Sum of the contributions not shown individually.
    pub rest: f64,
}

fn by_magnitude(mut v: Vec<(usize, f64)>, names: &[String]) -> Vec<(String, f64)> {
    v.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    v.into_iter().map(|(j, p)| (names[j].clone(), p)).collect()
}

impl ForcePlotData {
    /// Partitions the nonzero `phi` by sign. With `feature`, only that
    /// feature is listed and everything else goes into `rest`.
    pub fn new(
        names: &[String],
        phi: &[f64],
        base_value: f64,
        fx: f64,
        feature: Option<&str>,
    ) -> Result<Self> {
        if names.len() != phi.len() {
            return Err(ExplainError::DimensionMismatch {
                expected: names.len(),
                got: phi.len(),
            });
        }
        let keep = match feature {
            Some(name) => Some(
                names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| ExplainError::InvalidInput(format!("unknown feature {name}")))?,
            ),
            None => None,
        };
        let shown = |j: usize| keep.is_none_or(|k| k == j);
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut rest = 0.0;
        for (j, &p) in phi.iter().enumerate() {
            if !shown(j) {
                rest += p;
            } else if p > 0.0 {
                pos.push((j, p));
            } else if p < 0.0 {
                neg.push((j, p));
            }
        }
        Ok(Self {
            base_value,
            fx,
            positive: by_magnitude(pos, names),
            negative: by_magnitude(neg, names),
            feature: feature.map(str::to_string),
            rest,
        })
    }

    /// Signed sum of every segment, `rest` included.
    pub fn total(&self) -> f64 {
        self.positive.iter().chain(&self.negative).map(|(_, p)| p).sum::<f64>() + self.rest
    }

    /// `base_value + total() - fx`.
    pub fn residual(&self) -> f64 {
        self.base_value + self.total() - self.fx
    }
}
