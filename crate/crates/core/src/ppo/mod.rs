//! Proximal Policy Optimization over [`PortfolioEnv`] episodes.
//!
//! Each update collects one full episode per actor with sampled Dirichlet
//! actions, computes discounted returns (value targets) and GAE advantages,
//! then runs several epochs of shuffled minibatch Adam steps on the clipped
//! surrogate plus value and entropy terms.

mod adam;
mod q_estimate;
mod returns;
mod train;
mod update;

pub use adam::Adam;
pub use q_estimate::{estimate_q, MeanPolicy, Policy, QEstimate, SampledPolicy};
pub use returns::{compute_gae, compute_returns, normalize_advantages};
pub use train::{build_batch, collect_rollout, train, train_with, Trainer};
pub use update::{minibatch_loss, ppo_update, Batch, MinibatchOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, EnvError};
use crate::policy::NetError;

#[derive(Debug, Error, PartialEq)]
pub enum PpoError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("non-finite loss in update {update}, epoch {epoch}, minibatch {minibatch}")]
    NonFiniteLoss {
        update: usize,
        epoch: usize,
        minibatch: usize,
    },
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid PPO config: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = PpoError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub n_updates: usize,
    /// Independent episodes collected per update.
    pub n_actors: usize,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            epochs_per_update: 10,
            minibatch_size: 64,
            learning_rate: 3e-4,
            value_coef: 0.5,
            entropy_coef: 0.0,
            n_updates: 100,
            n_actors: 1,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(PpoError::InvalidConfig(msg.into()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_epsilon > 0.0) {
            return bad("clip_epsilon must be positive");
        }
        if self.minibatch_size == 0 {
            return bad("minibatch_size must be >= 1");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if self.value_coef < 0.0 || self.entropy_coef < 0.0 {
            return bad("loss coefficients must be non-negative");
        }
        if self.n_actors == 0 {
            return bad("n_actors must be >= 1");
        }
        Ok(())
    }
}

/// One collected episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub log_probs_old: Vec<f64>,
    pub values_old: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Diagnostics for one outer update; one line of `train_log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub update: usize,
    pub mean_reward: f64,
    pub surrogate_loss: f64,
    pub value_loss: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}
