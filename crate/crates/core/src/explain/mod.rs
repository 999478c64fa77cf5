//! Model-agnostic post-hoc explainers.
//!
//! Every explainer works on a scalar function of the flat feature vector;
//! for the policy that is one component of the deterministic allocation.
//! Missing features take background values (marginal expectation).

mod bundle;
mod force;
mod importance;
mod kernel;
mod lime;
mod shapley;

pub use bundle::{
    explain_log, lime_json, shap_json, write_bundle, ExplainConfig, ExplanationBundle,
    InstanceExplanation, InstanceSelection, OutputExplanations, Provenance, REPLAY_TOL,
};
pub use force::ForcePlotData;
pub use importance::{
    aggregate_importance, permutation_importance, GroupBy, ImportanceVector, IMPORTANCE_METRIC,
};
pub use kernel::{kernel_shap, shapley_kernel_weight, KernelSamples};
pub use lime::{lime_explain, perturbations, FeatureStats, LimeConfig, LimeExplanation, Perturbation};
pub use shapley::{exact_shapley, ShapMethod, ShapValues, MAX_EXACT_FEATURES};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{NetError, PolicyNet};
use crate::seed::rng_for;

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error("need at least 2 data rows, got {0}")]
    DegenerateData(usize),
    #[error("unparsable feature name `{0}`")]
    UnparsableName(String),
    #[error("{0} features exceed the exact enumeration limit")]
    TooManyFeatures(usize),
    #[error("weighted least-squares system is singular; raise n_samples")]
    SingularSystem,
    #[error("all proximity weights vanish")]
    DegenerateSample,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid explainer input: {0}")]
    InvalidInput(String),
    #[error("decision log does not replay through the model (first mismatch {0})")]
    LogModelMismatch(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

pub type Result<T, E = ExplainError> = std::result::Result<T, E>;

/// A pure scalar function of a feature vector.
pub trait ScalarModel: Sync {
    fn n_features(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
}

/// Weight the policy assigns to output `k` (0 = cash).
#[derive(Debug, Clone, Copy)]
pub struct PredictFn<'a> {
    net: &'a PolicyNet,
    output: usize,
}

impl<'a> PredictFn<'a> {
    pub fn new(net: &'a PolicyNet, output: usize) -> Result<Self> {
        if output >= net.n_outputs() {
            return Err(ExplainError::InvalidInput(format!(
                "output {output} out of range for {} outputs",
                net.n_outputs()
            )));
        }
        Ok(Self { net, output })
    }

    pub fn output(&self) -> usize {
        self.output
    }
}

impl ScalarModel for PredictFn<'_> {
    fn n_features(&self) -> usize {
        self.net.input_dim()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.net
            .forward(x)
            .expect("explainers pass vectors of the model's input width")
            .mean_weights[self.output]
    }
}

/// Adapts a closure into a [`ScalarModel`].
pub struct FnModel<F> {
    n_features: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnModel<F> {
    pub fn new(n_features: usize, f: F) -> Self {
        Self { n_features, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> ScalarModel for FnModel<F> {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

/// Where background rows came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundSpec {
    pub source: String,
    pub size: usize,
    pub seed: Option<u64>,
}

/// Reference states standing in for "missing" features.
#[derive(Debug, Clone, PartialEq)]
pub struct Background {
    rows: Vec<Vec<f64>>,
    pub spec: BackgroundSpec,
}

impl Background {
    pub fn new(rows: Vec<Vec<f64>>, source: impl Into<String>) -> Result<Self> {
        let d = rows.first().map(Vec::len).ok_or_else(|| {
            ExplainError::InvalidInput("background needs at least one row".into())
        })?;
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(ExplainError::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        let size = rows.len();
        Ok(Self {
            rows,
            spec: BackgroundSpec {
                source: source.into(),
                size,
                seed: None,
            },
        })
    }

    /// Uniformly samples `size` rows without replacement (all rows when
    /// fewer are available), keeping their original order.
    pub fn sample(rows: &[Vec<f64>], size: usize, seed: u64, source: impl Into<String>) -> Result<Self> {
        let mut rng = rng_for(seed, &[]);
        let mut picked = index::sample(&mut rng, rows.len(), size.min(rows.len())).into_vec();
        picked.sort_unstable();
        let mut bg = Self::new(picked.into_iter().map(|i| rows[i].clone()).collect(), source)?;
        bg.spec.seed = Some(seed);
        Ok(bg)
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn n_features(&self) -> usize {
        self.rows[0].len()
    }
}

/// Mean of `f` over the background with features in `mask` taken from `x`.
pub(crate) fn coalition_value<M: ScalarModel + ?Sized>(
    f: &M,
    x: &[f64],
    bg: &Background,
    mask: u64,
) -> f64 {
    let mut composite = vec![0.0; x.len()];
    let mut total = 0.0;
    for row in bg.rows() {
        for (j, c) in composite.iter_mut().enumerate() {
            *c = if mask >> j & 1 == 1 { x[j] } else { row[j] };
        }
        total += f.eval(&composite);
    }
    total / bg.rows().len() as f64
}

pub(crate) fn coalition_values<M: ScalarModel + ?Sized>(
    f: &M,
    x: &[f64],
    bg: &Background,
    masks: &[u64],
) -> Vec<f64> {
    masks
        .par_iter()
        .map(|&m| coalition_value(f, x, bg, m))
        .collect()
}

pub(crate) fn check_instance<M: ScalarModel + ?Sized>(f: &M, x: &[f64], bg: &Background) -> Result<()> {
    let d = f.n_features();
    if x.len() != d {
        return Err(ExplainError::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    if bg.n_features() != d {
        return Err(ExplainError::DimensionMismatch {
            expected: d,
            got: bg.n_features(),
        });
    }
    Ok(())
}
