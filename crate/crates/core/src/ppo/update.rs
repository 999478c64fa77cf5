use rand::seq::SliceRandom;
use rand::Rng;

use super::{Adam, PpoConfig, PpoError, Result, TrainStats};
use crate::env::Action;
use crate::policy::{dirichlet, OutputGrad, PolicyNet};

/// Flattened samples from one or more trajectories, ready for optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub log_probs_old: Vec<f64>,
    /// Normalized advantages.
    pub advantages: Vec<f64>,
    /// Discounted-return value targets.
    pub returns: Vec<f64>,
    /// Mean per-step reward over the collected episodes.
    pub mean_reward: f64,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Loss, diagnostics and parameter gradient for one minibatch.
#[derive(Debug, Clone)]
pub struct MinibatchOutcome {
    pub loss: f64,
    /// `-mean(min(rho A, clip(rho) A))`.
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub ratios: Vec<f64>,
    pub clipped: usize,
    pub grad: Vec<f64>,
}

/// Evaluates the clipped PPO objective on `indices` and its gradient.
pub fn minibatch_loss(
    net: &PolicyNet,
    batch: &Batch,
    indices: &[usize],
    config: &PpoConfig,
) -> Result<MinibatchOutcome> {
    let m = indices.len() as f64;
    let eps = config.clip_epsilon;
    let mut grad = vec![0.0; net.n_params()];
    let mut out = MinibatchOutcome {
        loss: 0.0,
        surrogate: 0.0,
        value_loss: 0.0,
        entropy: 0.0,
        ratios: Vec::with_capacity(indices.len()),
        clipped: 0,
        grad: Vec::new(),
    };

    for &i in indices {
        let cache = net.forward_cached(&batch.states[i])?;
        let alpha = &cache.output.alpha;
        let x = batch.actions[i].weights();
        let logp = dirichlet::log_density(alpha, x);
        let ratio = (logp - batch.log_probs_old[i]).exp();
        let adv = batch.advantages[i];
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * adv;
        out.surrogate -= unclipped.min(clipped) / m;
        if !(1.0 - eps..=1.0 + eps).contains(&ratio) {
            out.clipped += 1;
        }
        out.ratios.push(ratio);

        let v_err = cache.output.value - batch.returns[i];
        out.value_loss += v_err * v_err / m;

        let mut upstream = OutputGrad::zeros(alpha.len());
        // The min picks the unclipped branch whenever it is not larger.
        if unclipped <= clipped {
            let d_logp = -unclipped / m;
            for (u, g) in upstream.alpha.iter_mut().zip(dirichlet::log_density_grad(alpha, x)) {
                *u += d_logp * g;
            }
        }
        if config.entropy_coef > 0.0 {
            out.entropy += dirichlet::entropy(alpha) / m;
            for (u, g) in upstream.alpha.iter_mut().zip(dirichlet::entropy_grad(alpha)) {
                *u -= config.entropy_coef * g / m;
            }
        }
        upstream.value = 2.0 * config.value_coef * v_err / m;
        net.backward_into(&cache, &upstream, &mut grad)?;
    }

    out.loss = out.surrogate + config.value_coef * out.value_loss - config.entropy_coef * out.entropy;
    out.grad = grad;
    Ok(out)
}

/// Mean of `(rho - 1) - ln rho` over the batch: a non-negative KL estimate.
fn approx_kl(net: &PolicyNet, batch: &Batch) -> Result<f64> {
    let mut kl = 0.0;
    for i in 0..batch.len() {
        let out = net.forward(&batch.states[i])?;
        let log_ratio = dirichlet::log_density(&out.alpha, batch.actions[i].weights())
            - batch.log_probs_old[i];
        kl += log_ratio.exp_m1() - log_ratio;
    }
    Ok(kl / batch.len().max(1) as f64)
}

/// Runs `epochs_per_update` passes of shuffled minibatch Adam steps.
pub fn ppo_update<R: Rng + ?Sized>(
    net: &mut PolicyNet,
    adam: &mut Adam,
    batch: &Batch,
    config: &PpoConfig,
    update: usize,
    rng: &mut R,
) -> Result<TrainStats> {
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut surrogate = 0.0;
    let mut value_loss = 0.0;
    let mut n_minibatches = 0usize;
    let mut clipped = 0usize;
    let mut seen = 0usize;

    for epoch in 0..config.epochs_per_update {
        order.shuffle(rng);
        for (minibatch, chunk) in order.chunks(config.minibatch_size).enumerate() {
            let outcome = minibatch_loss(net, batch, chunk, config)?;
            if !outcome.loss.is_finite() || outcome.grad.iter().any(|g| !g.is_finite()) {
                return Err(PpoError::NonFiniteLoss {
                    update,
                    epoch,
                    minibatch,
                });
            }
            adam.step(net.params_mut(), &outcome.grad);
            surrogate += outcome.surrogate;
            value_loss += outcome.value_loss;
            clipped += outcome.clipped;
            seen += chunk.len();
            n_minibatches += 1;
        }
    }

    if n_minibatches == 0 && !batch.is_empty() {
        let outcome = minibatch_loss(net, batch, &order, config)?;
        surrogate = outcome.surrogate;
        value_loss = outcome.value_loss;
        n_minibatches = 1;
    }
    let denom = n_minibatches.max(1) as f64;
    Ok(TrainStats {
        update,
        mean_reward: batch.mean_reward,
        surrogate_loss: surrogate / denom,
        value_loss: value_loss / denom,
        clip_fraction: if seen == 0 {
            0.0
        } else {
            clipped as f64 / seen as f64
        },
        approx_kl: approx_kl(net, batch)?,
    })
}
