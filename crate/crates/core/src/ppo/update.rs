use super::nn::{Adam, Grads};
use super::policy::{NetworkShape, PolicyParams};
use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PPOConfig {
    pub learning_rate: f64,
    pub clip_range: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    /// Transitions drawn from the replay buffer per epoch.
    pub sample_size: usize,
    pub n_envs: usize,
    /// Collection/update rounds.
    pub rounds: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Global gradient-norm clip per network; `0` disables.
    pub max_grad_norm: f64,
    /// Multiplies environment rewards before they reach the learner.
    pub reward_scale: f64,
    /// Wall-clock budget for [`super::train`]; checked between rounds.
    pub max_seconds: Option<f64>,
    pub network: NetworkShape,
}

impl Default for PPOConfig {
    fn default() -> Self {
        PPOConfig {
            learning_rate: 0.003,
            clip_range: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            epochs: 4,
            minibatch_size: 64,
            sample_size: 1024,
            n_envs: 4,
            rounds: 20,
            value_coef: 0.5,
            entropy_coef: 0.0,
            max_grad_norm: 0.5,
            reward_scale: 0.01,
            max_seconds: None,
            network: NetworkShape::default(),
        }
    }
}

impl PPOConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(format!("gae_lambda must lie in [0, 1], got {}", self.gae_lambda));
        }
        if !(self.clip_range > 0.0) {
            return Err(format!("clip_range must be > 0, got {}", self.clip_range));
        }
        if !(self.learning_rate >= 0.0) {
            return Err("learning_rate must be >= 0".into());
        }
        if self.minibatch_size == 0 || self.n_envs == 0 {
            return Err("minibatch_size and n_envs must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Batch {
        Batch {
            states: self.states.select(Axis(0), idx),
            actions: idx.iter().map(|&i| self.actions[i]).collect(),
            old_log_probs: idx.iter().map(|&i| self.old_log_probs[i]).collect(),
            advantages: idx.iter().map(|&i| self.advantages[i]).collect(),
            returns: idx.iter().map(|&i| self.returns[i]).collect(),
        }
    }

    /// Zero mean, unit variance advantages (left alone when constant).
    pub fn normalize_advantages(&mut self) {
        let n = self.advantages.len() as f64;
        if n < 2.0 {
            return;
        }
        let mean = self.advantages.iter().sum::<f64>() / n;
        let var = self.advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if std > 1e-12 {
            self.advantages.iter_mut().for_each(|a| *a = (*a - mean) / std);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub actor_grads: Grads,
    pub critic_grads: Grads,
}

/// Clipped-surrogate loss (to minimize) and its exact gradients:
///
/// `−mean min(r·Â, clip(r, 1−ε, 1+ε)·Â) + c_v·mean (V − R)² − c_e·mean H`.
pub fn loss_and_grads(params: &PolicyParams, batch: &Batch, cfg: &PPOConfig) -> LossOutput {
    let n = batch.len();
    let nf = n as f64;
    let eps = cfg.clip_range;

    let (logits, actor_cache) = params.actor.forward_cached(batch.states.view());
    let mut g_logits = Array2::<f64>::zeros(logits.raw_dim());
    let (mut policy_loss, mut entropy, mut clipped, mut kl) = (0.0, 0.0, 0usize, 0.0);
    for i in 0..n {
        let z = logits.row(i);
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|v| (v - m).exp()).sum();
        let lse = m + sum.ln();
        let p: Vec<f64> = z.iter().map(|v| (v - lse).exp()).collect();
        let logp: Vec<f64> = z.iter().map(|v| v - lse).collect();
        let a = batch.actions[i];
        let adv = batch.advantages[i];
        let log_ratio = logp[a] - batch.old_log_probs[i];
        let ratio = log_ratio.exp();
        let clipped_ratio = ratio.clamp(1.0 - eps, 1.0 + eps);
        let unclipped_obj = ratio * adv;
        let clipped_obj = clipped_ratio * adv;
        policy_loss -= unclipped_obj.min(clipped_obj) / nf;
        if (ratio - 1.0).abs() > eps {
            clipped += 1;
        }
        kl += (ratio - 1.0 - log_ratio) / nf;
        let h: f64 = -p.iter().zip(&logp).map(|(pi, li)| pi * li).sum::<f64>();
        entropy += h / nf;

        let mut row = g_logits.row_mut(i);
        if unclipped_obj <= clipped_obj {
            // d(−r·Â/n)/dz_j = −(Â·r/n)(1[j=a] − p_j)
            let k = -adv * ratio / nf;
            for j in 0..p.len() {
                row[j] += k * (if j == a { 1.0 } else { 0.0 } - p[j]);
            }
        }
        if cfg.entropy_coef != 0.0 {
            // dH/dz_j = −p_j (log p_j + H)
            let k = -cfg.entropy_coef / nf;
            for j in 0..p.len() {
                row[j] += k * (-p[j] * (logp[j] + h));
            }
        }
    }
    let actor_grads = params.actor.backward(&actor_cache, g_logits);

    let (values, critic_cache) = params.critic.forward_cached(batch.states.view());
    let mut g_values = Array2::<f64>::zeros(values.raw_dim());
    let mut value_loss = 0.0;
    for i in 0..n {
        let d = values[[i, 0]] - batch.returns[i];
        value_loss += d * d / nf;
        g_values[[i, 0]] = cfg.value_coef * 2.0 * d / nf;
    }
    let critic_grads = params.critic.backward(&critic_cache, g_values);

    LossOutput {
        loss: policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy,
        policy_loss,
        value_loss,
        entropy,
        clip_fraction: clipped as f64 / nf,
        approx_kl: kl,
        actor_grads,
        critic_grads,
    }
}

/// Parameters plus optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Learner {
    pub params: PolicyParams,
    actor_opt: Adam,
    critic_opt: Adam,
}

impl Learner {
    pub fn new(params: PolicyParams, learning_rate: f64) -> Self {
        let actor_opt = Adam::new(&params.actor, learning_rate);
        let critic_opt = Adam::new(&params.critic, learning_rate);
        Learner { params, actor_opt, critic_opt }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub minibatches: usize,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum UpdateError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite loss or gradient; update aborted")]
    NonFinite,
}

fn clip_norm(g: &mut Grads, max_norm: f64) {
    if max_norm > 0.0 {
        let norm = g.sq_norm().sqrt();
        if norm > max_norm {
            g.scale(max_norm / norm);
        }
    }
}

/// One pass of shuffled minibatch updates over `batch`. Advantages are
/// normalized per minibatch. On a non-finite loss or gradient the learner
/// is restored to its state before the call.
pub fn ppo_update<R: Rng + ?Sized>(
    learner: &mut Learner,
    batch: &Batch,
    cfg: &PPOConfig,
    rng: &mut R,
) -> Result<UpdateStats, UpdateError> {
    if batch.is_empty() {
        return Err(UpdateError::EmptyBatch);
    }
    let backup = learner.clone();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.shuffle(rng);
    let mut stats = UpdateStats::default();
    for chunk in order.chunks(cfg.minibatch_size) {
        let mut mb = batch.select(chunk);
        mb.normalize_advantages();
        let mut out = loss_and_grads(&learner.params, &mb, cfg);
        if !out.loss.is_finite() || !out.actor_grads.is_finite() || !out.critic_grads.is_finite() {
            *learner = backup;
            return Err(UpdateError::NonFinite);
        }
        clip_norm(&mut out.actor_grads, cfg.max_grad_norm);
        clip_norm(&mut out.critic_grads, cfg.max_grad_norm);
        learner.actor_opt.step(&mut learner.params.actor, &out.actor_grads);
        learner.critic_opt.step(&mut learner.params.critic, &out.critic_grads);
        stats.minibatches += 1;
        stats.policy_loss += out.policy_loss;
        stats.value_loss += out.value_loss;
        stats.entropy += out.entropy;
        stats.clip_fraction += out.clip_fraction;
        stats.approx_kl += out.approx_kl;
    }
    if !learner.params.is_finite() {
        *learner = backup;
        return Err(UpdateError::NonFinite);
    }
    let k = stats.minibatches as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.clip_fraction /= k;
    stats.approx_kl /= k;
    Ok(stats)
}
