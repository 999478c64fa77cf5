//! Episodic portfolio simulator over a [`FeatureMatrix`] timeline.
//!
//! At step `t` the agent sees feature row `t` and rebalances; the new
//! allocation then earns the price relatives of row `t + 1`. Reward is the
//! log growth of portfolio value net of proportional transaction costs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::FeatureMatrix;

/// Simplex tolerance accepted from callers.
pub const SIMPLEX_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("environment needs at least 2 feature rows, got {0}")]
    TooFewRows(usize),
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
}

/// Portfolio weights: index 0 is cash, 1..=N the assets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(Vec<f64>);

impl Action {
    /// Validates the simplex constraint to [`SIMPLEX_TOL`]. Weights already
    /// within 1e-12 of the simplex are kept bit-for-bit; others are clipped
    /// at zero and renormalized.
    pub fn new(weights: Vec<f64>) -> Result<Self, EnvError> {
        if weights.len() < 2 {
            return Err(EnvError::InvalidAction(format!(
                "need cash plus at least one asset, got {} weights",
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < -SIMPLEX_TOL) {
            return Err(EnvError::InvalidAction(format!("weight {w} outside [0, 1]")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(EnvError::InvalidAction(format!("weights sum to {sum}")));
        }
        if (sum - 1.0).abs() <= 1e-12 && weights.iter().all(|w| *w >= 0.0) {
            return Ok(Self(weights));
        }
        let clipped: Vec<f64> = weights.into_iter().map(|w| w.max(0.0)).collect();
        let sum: f64 = clipped.iter().sum();
        Ok(Self(clipped.into_iter().map(|w| w / sum).collect()))
    }

    pub fn all_cash(n_outputs: usize) -> Self {
        let mut w = vec![0.0; n_outputs];
        w[0] = 1.0;
        Self(w)
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub features: Vec<f64>,
    pub prev_weights: Action,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    /// `None` once the episode is over.
    pub next_state: Option<State>,
    pub reward: f64,
    pub portfolio_value: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Proportional cost per unit of one-sided turnover.
    pub cost_rate: f64,
    /// Per-step risk-free log-return earned by cash.
    pub cash_rate: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            cost_rate: 0.0,
            cash_rate: 0.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(0.0..=0.1).contains(&self.cost_rate) {
            return Err(EnvError::InvalidConfig(format!(
                "cost_rate {} outside [0, 0.1]",
                self.cost_rate
            )));
        }
        if !self.cash_rate.is_finite() {
            return Err(EnvError::InvalidConfig("cash_rate must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PortfolioEnv<'a> {
    features: &'a FeatureMatrix,
    config: EnvConfig,
    t: usize,
    weights: Vec<f64>,
    value: f64,
    done: bool,
}

impl<'a> PortfolioEnv<'a> {
    pub fn new(features: &'a FeatureMatrix, config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        if features.n_rows() < 2 {
            return Err(EnvError::TooFewRows(features.n_rows()));
        }
        let n_out = features.n_assets() + 1;
        Ok(Self {
            features,
            config,
            t: 0,
            weights: Action::all_cash(n_out).into_inner(),
            value: 1.0,
            done: false,
        })
    }

    pub fn features(&self) -> &'a FeatureMatrix {
        self.features
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn n_outputs(&self) -> usize {
        self.features.n_assets() + 1
    }

    /// Number of decisions in a full episode.
    pub fn episode_len(&self) -> usize {
        self.features.n_rows() - 1
    }

    pub fn portfolio_value(&self) -> f64 {
        self.value
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn reset(&mut self) -> State {
        self.t = 0;
        self.weights = Action::all_cash(self.n_outputs()).into_inner();
        self.value = 1.0;
        self.done = false;
        self.state()
    }

    fn state(&self) -> State {
        State {
            features: self.features.row(self.t).to_vec(),
            prev_weights: Action(self.weights.clone()),
            t: self.t,
        }
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let w = action.weights();
        if w.len() != self.n_outputs() {
            return Err(EnvError::InvalidAction(format!(
                "expected {} weights, got {}",
                self.n_outputs(),
                w.len()
            )));
        }

        let turnover =
            0.5 * w.iter().zip(&self.weights).map(|(a, b)| (a - b).abs()).sum::<f64>();
        let cash_growth = self.config.cash_rate.exp();
        let relatives = self.features.relatives(self.t + 1);
        let mut grown: Vec<f64> = Vec::with_capacity(w.len());
        grown.push(w[0] * cash_growth);
        grown.extend(w[1..].iter().zip(relatives).map(|(wi, r)| wi * r));
        let gross: f64 = grown.iter().sum();
        let net = gross * (1.0 - self.config.cost_rate * turnover);
        let reward = net.ln();

        self.value *= net;
        self.weights = grown.into_iter().map(|g| g / gross).collect();
        self.t += 1;
        self.done = self.t + 1 >= self.features.n_rows();

        Ok(StepResult {
            next_state: (!self.done).then(|| self.state()),
            reward,
            portfolio_value: self.value,
            done: self.done,
        })
    }
}

/// Record of one full episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub states: Vec<State>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    pub portfolio_values: Vec<f64>,
}

impl Episode {
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn final_value(&self) -> f64 {
        self.portfolio_values.last().copied().unwrap_or(1.0)
    }
}

/// Resets `env` and plays `policy` until the episode ends.
pub fn run_episode<F>(env: &mut PortfolioEnv<'_>, mut policy: F) -> Result<Episode, EnvError>
where
    F: FnMut(&State) -> Action,
{
    let mut state = env.reset();
    let cap = env.episode_len();
    let mut ep = Episode {
        states: Vec::with_capacity(cap),
        actions: Vec::with_capacity(cap),
        rewards: Vec::with_capacity(cap),
        portfolio_values: Vec::with_capacity(cap),
    };
    loop {
        let action = policy(&state);
        let step = env.step(&action)?;
        ep.states.push(state);
        ep.actions.push(action);
        ep.rewards.push(step.reward);
        ep.portfolio_values.push(step.portfolio_value);
        match step.next_state {
            Some(next) => state = next,
            None => return Ok(ep),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    /// Matrix whose row `t` carries `relatives[t]`; features are a constant.
    pub(crate) fn matrix(relatives: &[Vec<f64>]) -> FeatureMatrix {
        let n = relatives[0].len();
        let d0 = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
        FeatureMatrix {
            tickers: (0..n).map(|i| format!("A{i}")).collect(),
            feature_names: (0..n)
                .flat_map(|i| ["open", "high", "low", "close"].map(|k| format!("A{i}_{k}_L1")))
                .collect(),
            dates: (0..relatives.len())
                .map(|i| d0 + chrono::Days::new(i as u64))
                .collect(),
            rows: vec![1.0; relatives.len() * 4 * n],
            price_relatives: relatives.concat(),
        }
    }

    #[test]
    fn reset_is_all_cash_and_idempotent() {
        let m = matrix(&[vec![1.0, 1.0], vec![1.1, 0.9], vec![1.0, 1.0]]);
        let mut env = PortfolioEnv::new(&m, EnvConfig::default()).unwrap();
        let s = env.reset();
        assert_eq!(s.t, 0);
        assert_eq!(s.prev_weights.weights(), &[1.0, 0.0, 0.0]);
        assert_eq!(s.features, m.row(0));
        assert_eq!(env.reset(), s);
    }

    #[test]
    fn all_cash_has_zero_reward() {
        let m = matrix(&[vec![1.0], vec![1.3], vec![0.7]]);
        let mut env = PortfolioEnv::new(&m, EnvConfig::default()).unwrap();
        let ep = run_episode(&mut env, |_| Action::all_cash(2)).unwrap();
        assert_eq!(ep.total_reward(), 0.0);
        assert_eq!(ep.final_value(), 1.0);
    }

    #[test]
    fn single_asset_growth() {
        let m = matrix(&[vec![1.0], vec![1.1]]);
        let mut env = PortfolioEnv::new(&m, EnvConfig::default()).unwrap();
        env.reset();
        let r = env.step(&Action::new(vec![0.0, 1.0]).unwrap()).unwrap();
        assert!((r.reward - 1.1f64.ln()).abs() < 1e-15);
        assert!(r.done);
        assert!(r.next_state.is_none());
        assert_eq!(env.step(&Action::all_cash(2)), Err(EnvError::EpisodeFinished));
    }

    #[test]
    fn repeated_action_pays_cost_once_in_flat_market() {
        let m = matrix(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]);
        let cfg = EnvConfig {
            cost_rate: 0.001,
            cash_rate: 0.0,
        };
        let mut env = PortfolioEnv::new(&m, cfg).unwrap();
        env.reset();
        let a = Action::new(vec![0.2, 0.5, 0.3]).unwrap();
        let first = env.step(&a).unwrap();
        let second = env.step(&a).unwrap();
        // One-sided turnover from all cash: 0.5 * (0.8 + 0.5 + 0.3) = 0.8.
        let expected_first = (1.0f64 - 0.001 * 0.8).ln();
        assert!((first.reward - expected_first).abs() < 1e-15);
        assert_eq!(second.reward, 0.0);
    }

    #[test]
    fn buy_and_hold_product_of_relatives() {
        let m = matrix(&[vec![1.0], vec![1.1], vec![0.9]]);
        let mut env = PortfolioEnv::new(&m, EnvConfig::default()).unwrap();
        let ep = run_episode(&mut env, |s| {
            if s.t == 0 {
                Action::new(vec![0.0, 1.0]).unwrap()
            } else {
                s.prev_weights.clone()
            }
        })
        .unwrap();
        assert_eq!(ep.rewards.len(), 2);
        assert!((ep.total_reward() - 0.99f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_rows_give_one_step() {
        let m = matrix(&[vec![1.0], vec![1.2]]);
        let mut env = PortfolioEnv::new(&m, EnvConfig::default()).unwrap();
        let ep = run_episode(&mut env, |_| Action::all_cash(2)).unwrap();
        assert_eq!(ep.rewards.len(), 1);
    }

    #[test]
    fn rejects_bad_actions_and_configs() {
        assert!(Action::new(vec![0.5, 0.6]).is_err());
        assert!(Action::new(vec![1.5, -0.5]).is_err());
        assert!(Action::new(vec![f64::NAN, 1.0]).is_err());
        assert!(Action::new(vec![1.0]).is_err());
        let m = matrix(&[vec![1.0], vec![1.2]]);
        let mut env = PortfolioEnv::new(&m, EnvConfig::default()).unwrap();
        env.reset();
        assert!(matches!(
            env.step(&Action::new(vec![1.0, 0.0, 0.0]).unwrap()),
            Err(EnvError::InvalidAction(_))
        ));
        let bad = EnvConfig {
            cost_rate: 0.2,
            cash_rate: 0.0,
        };
        assert!(PortfolioEnv::new(&m, bad).is_err());
        assert_eq!(
            PortfolioEnv::new(&matrix(&[vec![1.0]]), EnvConfig::default()).unwrap_err(),
            EnvError::TooFewRows(1)
        );
    }

    #[test]
    fn cash_rate_accrues() {
        let m = matrix(&[vec![1.0], vec![1.0], vec![1.0]]);
        let cfg = EnvConfig {
            cost_rate: 0.0,
            cash_rate: 0.001,
        };
        let mut env = PortfolioEnv::new(&m, cfg).unwrap();
        let ep = run_episode(&mut env, |_| Action::all_cash(2)).unwrap();
        assert!((ep.total_reward() - 0.002).abs() < 1e-15);
    }
}
