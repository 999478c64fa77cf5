use rand::Rng;
use rayon::prelude::*;

use super::{
    compute_gae, compute_returns, normalize_advantages, ppo_update, Adam, Batch, PpoConfig,
    PpoError, Result, TrainStats, Trajectory,
};
use crate::env::PortfolioEnv;
use crate::policy::{NetError, PolicyNet};
use crate::seed::rng_for;

/// Plays one full episode with sampled actions.
pub fn collect_rollout<R: Rng + ?Sized>(
    env: &mut PortfolioEnv<'_>,
    net: &PolicyNet,
    rng: &mut R,
) -> Result<Trajectory> {
    let k = env.episode_len();
    let mut traj = Trajectory {
        states: Vec::with_capacity(k),
        actions: Vec::with_capacity(k),
        rewards: Vec::with_capacity(k),
        log_probs_old: Vec::with_capacity(k),
        values_old: Vec::with_capacity(k),
    };
    let mut state = env.reset();
    loop {
        let value = net.forward(&state.features)?.value;
        let (action, log_prob) = net.sample_action(&state.features, rng)?;
        let step = env.step(&action)?;
        traj.states.push(state.features);
        traj.actions.push(action);
        traj.rewards.push(step.reward);
        traj.log_probs_old.push(log_prob);
        traj.values_old.push(value);
        match step.next_state {
            Some(next) => state = next,
            None => return Ok(traj),
        }
    }
}

/// Concatenates trajectories (in the given order) into one batch with
/// returns and normalized GAE advantages.
pub fn build_batch(trajectories: &[Trajectory], config: &PpoConfig) -> Result<Batch> {
    let total: usize = trajectories.iter().map(Trajectory::len).sum();
    let mut batch = Batch {
        states: Vec::with_capacity(total),
        actions: Vec::with_capacity(total),
        log_probs_old: Vec::with_capacity(total),
        advantages: Vec::with_capacity(total),
        returns: Vec::with_capacity(total),
        mean_reward: 0.0,
    };
    let mut reward_sum = 0.0;
    for traj in trajectories {
        let k = traj.len();
        for (what, len) in [
            ("states", traj.states.len()),
            ("actions", traj.actions.len()),
            ("log_probs_old", traj.log_probs_old.len()),
            ("values_old", traj.values_old.len()),
        ] {
            if len != k {
                return Err(PpoError::LengthMismatch {
                    what,
                    expected: k,
                    got: len,
                });
            }
        }
        let mut values = traj.values_old.clone();
        values.push(0.0);
        let adv = compute_gae(&traj.rewards, &values, config.gamma, config.gae_lambda)?;
        batch.returns.extend(compute_returns(&traj.rewards, config.gamma));
        batch.advantages.extend(adv);
        batch.states.extend(traj.states.iter().cloned());
        batch.actions.extend(traj.actions.iter().cloned());
        batch.log_probs_old.extend(&traj.log_probs_old);
        reward_sum += traj.rewards.iter().sum::<f64>();
    }
    normalize_advantages(&mut batch.advantages);
    batch.mean_reward = if total == 0 {
        0.0
    } else {
        reward_sum / total as f64
    };
    Ok(batch)
}

/// Stateful trainer: owns the network and optimizer across updates.
#[derive(Debug, Clone)]
pub struct Trainer {
    net: PolicyNet,
    adam: Adam,
    config: PpoConfig,
    update: usize,
}

impl Trainer {
    pub fn new(net: PolicyNet, config: PpoConfig) -> Result<Self> {
        config.validate()?;
        let adam = Adam::new(net.n_params(), config.learning_rate);
        Ok(Self {
            net,
            adam,
            config,
            update: 0,
        })
    }

    pub fn net(&self) -> &PolicyNet {
        &self.net
    }

    pub fn into_net(self) -> PolicyNet {
        self.net
    }

    /// Collects `n_actors` episodes on clones of `env`, then updates once.
    pub fn step(&mut self, env: &PortfolioEnv<'_>) -> Result<TrainStats> {
        let update = self.update;
        let seed = self.config.seed;
        let net = &self.net;
        let trajectories = (0..self.config.n_actors)
            .into_par_iter()
            .map(|actor| {
                let mut rng = rng_for(seed, &[0, update as u64, actor as u64]);
                collect_rollout(&mut env.clone(), net, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let batch = build_batch(&trajectories, &self.config)?;
        let mut rng = rng_for(seed, &[1, update as u64]);
        let stats = ppo_update(
            &mut self.net,
            &mut self.adam,
            &batch,
            &self.config,
            update,
            &mut rng,
        )?;
        self.update += 1;
        Ok(stats)
    }
}

fn check_dims(env: &PortfolioEnv<'_>, net: &PolicyNet) -> Result<()> {
    let d = env.features().n_features();
    if d != net.input_dim() {
        return Err(NetError::DimensionMismatch {
            expected: net.input_dim(),
            got: d,
        }
        .into());
    }
    if env.n_outputs() != net.n_outputs() {
        return Err(NetError::DimensionMismatch {
            expected: net.n_outputs(),
            got: env.n_outputs(),
        }
        .into());
    }
    Ok(())
}

/// Runs `config.n_updates` PPO iterations, reporting each to `on_update`.
pub fn train_with<F>(
    env: &PortfolioEnv<'_>,
    net: PolicyNet,
    config: &PpoConfig,
    mut on_update: F,
) -> Result<(PolicyNet, Vec<TrainStats>)>
where
    F: FnMut(&TrainStats),
{
    check_dims(env, &net)?;
    let mut trainer = Trainer::new(net, config.clone())?;
    let mut history = Vec::with_capacity(config.n_updates);
    for _ in 0..config.n_updates {
        let stats = trainer.step(env)?;
        on_update(&stats);
        history.push(stats);
    }
    Ok((trainer.into_net(), history))
}

pub fn train(
    env: &PortfolioEnv<'_>,
    net: PolicyNet,
    config: &PpoConfig,
) -> Result<(PolicyNet, Vec<TrainStats>)> {
    train_with(env, net, config, |_| {})
}
