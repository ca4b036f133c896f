use super::features::feature_len;
use super::gae::gae;
use super::policy::{PolicyParams, PolicyProposer};
use super::replay::{priority, PrioritizedReplay, Transition};
use super::update::{ppo_update, Batch, Learner, PPOConfig, UpdateError, UpdateStats};
use crate::controller::{Controller, ControllerConfig, ControllerError};
use crate::derive_seed;
use crate::environment::{DoneReason, EnvConfig, EnvError, Environment};
use crate::evaluation::{run_episode, EpisodeRun};
use crate::grid::Grid;
use crate::scenario::log::LogMeta;
use crate::scenario::Chronic;
use crate::topology::ActionSet;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub episodes: usize,
    pub mean_reward: f64,
    pub mean_survival: f64,
    pub survival_rate: f64,
    pub new_transitions: usize,
    pub buffer: usize,
    pub clip_fraction: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: PolicyParams,
    pub metrics: Vec<RoundMetrics>,
    /// No overflow transition was ever recorded; `params` are the initial
    /// weights.
    pub no_overflow_transitions: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("at least one chronic is required")]
    NoChronics,
    #[error("invalid PPO config: {0}")]
    Config(String),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Update(#[from] UpdateError),
}

pub struct TrainSetup<'a> {
    pub grid: &'a Arc<Grid>,
    pub chronics: &'a [Arc<Chronic>],
    pub actions: &'a ActionSet,
    pub env: EnvConfig,
    pub controller: ControllerConfig,
    pub ppo: PPOConfig,
    pub seed: u64,
}

pub fn initial_params(grid: &Grid, actions: &ActionSet, cfg: &PPOConfig, seed: u64) -> PolicyParams {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x1417, 0));
    PolicyParams::new(feature_len(grid), actions.len(), &cfg.network, &mut rng)
}

/// Overflow transitions of one episode, with GAE computed over the
/// sub-sequence of steps where the policy was queried.
///
/// A transition's reward is the scaled sum of environment rewards from its
/// step up to (excluding) the next policy step; it is terminal when the
/// episode ended before the next policy step.
pub fn episode_transitions(run: &EpisodeRun, cfg: &PPOConfig, round: u64) -> Vec<Transition> {
    let traces: Vec<_> = run.policy_traces().collect();
    if traces.is_empty() {
        return vec![];
    }
    let n = traces.len();
    let mut rewards = Vec::with_capacity(n);
    let mut dones = Vec::with_capacity(n);
    for (j, &(step, _)) in traces.iter().enumerate() {
        let end = if j + 1 < n { traces[j + 1].0 } else { run.rewards.len() };
        rewards.push(run.rewards[step..end].iter().sum::<f64>() * cfg.reward_scale);
        dones.push(j + 1 == n);
    }
    let values: Vec<f64> = traces.iter().map(|(_, t)| t.value).collect();
    let (adv, ret) = gae(&rewards, &values, &dones, cfg.gamma, cfg.gae_lambda);
    traces
        .iter()
        .enumerate()
        .map(|(j, (_, t))| Transition {
            state: t.state.clone(),
            action: t.action_index,
            log_prob: t.log_prob,
            reward: rewards[j],
            done: dones[j],
            value: t.value,
            advantage: adv[j],
            ret: ret[j],
            priority: priority(adv[j]),
            round,
        })
        .collect()
}

fn batch_of(buffer: &PrioritizedReplay, idx: &[usize]) -> Batch {
    let items = buffer.items();
    let dim = items[idx[0]].state.len();
    let mut states = Array2::zeros((idx.len(), dim));
    for (r, &i) in idx.iter().enumerate() {
        states.row_mut(r).assign(&ndarray::ArrayView1::from(&items[i].state));
    }
    Batch {
        states,
        actions: idx.iter().map(|&i| items[i].action).collect(),
        old_log_probs: idx.iter().map(|&i| items[i].log_prob).collect(),
        advantages: idx.iter().map(|&i| items[i].advantage).collect(),
        returns: idx.iter().map(|&i| items[i].ret).collect(),
    }
}

/// PPO training through the gated controller.
///
/// Each round, `n_envs` workers each play one full episode on consecutive
/// chronics with a snapshot of the current policy (exploring by Gumbel
/// top-k). Results are merged in worker order, so a fixed seed gives fixed
/// weights regardless of thread scheduling. Wall-clock limits
/// (`max_seconds`) are the one exception.
pub fn train(setup: &TrainSetup, initial: Option<PolicyParams>) -> Result<TrainOutcome, TrainError> {
    let cfg = &setup.ppo;
    cfg.validate().map_err(TrainError::Config)?;
    setup.controller.validate()?;
    if setup.chronics.is_empty() {
        return Err(TrainError::NoChronics);
    }
    let init = initial.unwrap_or_else(|| initial_params(setup.grid, setup.actions, cfg, setup.seed));
    let mut learner = Learner::new(init.clone(), cfg.learning_rate);
    let mut buffer = PrioritizedReplay::new();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(setup.seed, 0x5A3B, 0));
    let mut metrics = Vec::new();
    let mut any_transition = false;
    let clock = Instant::now();

    for round in 0..cfg.rounds {
        if let Some(limit) = cfg.max_seconds {
            if clock.elapsed().as_secs_f64() >= limit {
                log::info!("time budget reached after {round} rounds");
                break;
            }
        }
        let snapshot = learner.params.clone();
        let runs: Vec<Result<EpisodeRun, TrainError>> = (0..cfg.n_envs)
            .into_par_iter()
            .map(|w| {
                let k = round * cfg.n_envs + w;
                let chronic = &setup.chronics[k % setup.chronics.len()];
                let env_seed = derive_seed(setup.seed, 0xE0E0, k as u64);
                let mut env = Environment::new(setup.grid.clone(), chronic.clone(), setup.env.clone(), env_seed)?;
                let mut controller = Controller::new(setup.controller.clone())?;
                let explore = ChaCha8Rng::seed_from_u64(derive_seed(setup.seed, 0x6B6B, k as u64));
                let mut proposer = PolicyProposer::exploring(&snapshot, explore);
                let meta = LogMeta {
                    grid: setup.grid.name.clone(),
                    chronic: chronic.id.clone(),
                    seed: env_seed,
                    agent: "powrl-train".into(),
                };
                Ok(run_episode(&mut env, Some((&mut controller, &mut proposer)), setup.actions, meta)?)
            })
            .collect();
        let mut new_transitions = 0;
        let (mut reward_sum, mut survival_sum, mut survived) = (0.0, 0.0, 0usize);
        for run in runs {
            let run = run?;
            reward_sum += run.total_reward;
            survival_sum += run.steps_survived as f64;
            if run.done_reason == Some(DoneReason::Survived) {
                survived += 1;
            }
            let ts = episode_transitions(&run, cfg, round as u64);
            new_transitions += ts.len();
            buffer.extend(ts);
        }
        buffer.drop_stale(round as u64);
        any_transition |= new_transitions > 0;

        let mut stats = UpdateStats::default();
        let mut updates = 0;
        if !buffer.is_empty() {
            for _ in 0..cfg.epochs {
                let n = cfg.sample_size.min(buffer.len()).max(1);
                let idx = buffer.sample_indices(n, &mut rng);
                let batch = batch_of(&buffer, &idx);
                match ppo_update(&mut learner, &batch, cfg, &mut rng) {
                    Ok(s) => {
                        updates += 1;
                        stats.clip_fraction += s.clip_fraction;
                        stats.value_loss += s.value_loss;
                        stats.entropy += s.entropy;
                    }
                    Err(UpdateError::NonFinite) => {
                        log::warn!("round {round}: non-finite update skipped");
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        let k = updates.max(1) as f64;
        let m = RoundMetrics {
            round,
            episodes: cfg.n_envs,
            mean_reward: reward_sum / cfg.n_envs as f64,
            mean_survival: survival_sum / cfg.n_envs as f64,
            survival_rate: survived as f64 / cfg.n_envs as f64,
            new_transitions,
            buffer: buffer.len(),
            clip_fraction: stats.clip_fraction / k,
            value_loss: stats.value_loss / k,
            entropy: stats.entropy / k,
            seconds: clock.elapsed().as_secs_f64(),
        };
        log::info!(
            "round {} reward {:.1} survival {:.1} new {} buffer {}",
            m.round,
            m.mean_reward,
            m.mean_survival,
            m.new_transitions,
            m.buffer
        );
        metrics.push(m);
    }

    if !any_transition {
        log::warn!("no overflow transition was recorded; returning the initial policy");
        return Ok(TrainOutcome { params: init, metrics, no_overflow_transitions: true });
    }
    Ok(TrainOutcome { params: learner.params, metrics, no_overflow_transitions: false })
}

/// Tab-separated metrics, one row per round.
pub fn metrics_table(metrics: &[RoundMetrics]) -> String {
    let mut s = String::from("round\tepisodes\tmean_reward\tmean_survival\tsurvival_rate\tnew_transitions\tbuffer\tclip_fraction\tvalue_loss\tentropy\tseconds\n");
    for m in metrics {
        writeln!(
            s,
            "{}\t{}\t{:.6}\t{:.3}\t{:.4}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.2}",
            m.round,
            m.episodes,
            m.mean_reward,
            m.mean_survival,
            m.survival_rate,
            m.new_transitions,
            m.buffer,
            m.clip_fraction,
            m.value_loss,
            m.entropy,
            m.seconds
        )
        .unwrap();
    }
    s
}
