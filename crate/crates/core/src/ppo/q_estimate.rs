use rand::{Rng, RngCore};

use super::{compute_returns, Result};
use crate::env::{Action, EnvError, PortfolioEnv, State};
use crate::policy::PolicyNet;

/// Something that chooses allocations.
pub trait Policy {
    fn act(&self, state: &State, rng: &mut dyn RngCore) -> Result<Action>;
    /// Deterministic choice, used to reach the queried state.
    fn mode(&self, state: &State) -> Result<Action>;
}

/// Samples from the Dirichlet head.
#[derive(Debug, Clone, Copy)]
pub struct SampledPolicy<'a>(pub &'a PolicyNet);

/// Always plays the Dirichlet mean.
#[derive(Debug, Clone, Copy)]
pub struct MeanPolicy<'a>(pub &'a PolicyNet);

impl Policy for SampledPolicy<'_> {
    fn act(&self, state: &State, rng: &mut dyn RngCore) -> Result<Action> {
        Ok(self.0.sample_action(&state.features, rng)?.0)
    }

    fn mode(&self, state: &State) -> Result<Action> {
        Ok(self.0.mean_action(&state.features)?)
    }
}

impl Policy for MeanPolicy<'_> {
    fn act(&self, state: &State, _rng: &mut dyn RngCore) -> Result<Action> {
        self.mode(state)
    }

    fn mode(&self, state: &State) -> Result<Action> {
        Ok(self.0.mean_action(&state.features)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_rollouts: usize,
}

/// Monte-Carlo action value: each rollout builds a fresh environment,
/// follows the policy's mode up to `state_index`, forces `action` there and
/// then samples the policy to the end. The estimate averages discounted
/// returns measured from `state_index`.
pub fn estimate_q<'a, F, P, R>(
    env_factory: F,
    policy: &P,
    state_index: usize,
    action: &Action,
    gamma: f64,
    n_rollouts: usize,
    rng: &mut R,
) -> Result<QEstimate>
where
    F: Fn() -> PortfolioEnv<'a>,
    P: Policy,
    R: Rng,
{
    let mut returns = Vec::with_capacity(n_rollouts);
    for _ in 0..n_rollouts {
        let mut env = env_factory();
        if state_index >= env.episode_len() {
            return Err(EnvError::EpisodeFinished.into());
        }
        let mut state = env.reset();
        while state.t < state_index {
            let a = policy.mode(&state)?;
            state = env
                .step(&a)?
                .next_state
                .expect("state_index lies before the terminal step");
        }
        let mut rewards = Vec::new();
        let mut step = env.step(action)?;
        rewards.push(step.reward);
        while let Some(s) = step.next_state {
            let a = policy.act(&s, rng)?;
            step = env.step(&a)?;
            rewards.push(step.reward);
        }
        returns.push(compute_returns(&rewards, gamma)[0]);
    }
    let n = returns.len().max(1) as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = if returns.len() > 1 {
        returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(QEstimate {
        mean,
        std_error: (var / n).sqrt(),
        n_rollouts,
    })
}
