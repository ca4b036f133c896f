//! Running agents over chronic suites and tabulating survival.

use crate::controller::{Controller, ControllerConfig, ControllerError, Decision, Exhaustive, PolicyTrace, Propose};
use crate::environment::{Action, DoneReason, EnvConfig, EnvError, Environment};
use crate::grid::Grid;
use crate::ppo::{PolicyParams, PolicyProposer};
use crate::scenario::log::{EpisodeLog, LogMeta, StepRecord};
use crate::scenario::Chronic;
use crate::topology::ActionSet;
use crate::derive_seed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    DoNothing,
    /// Gated controller with exhaustive one-step look-ahead in place of the
    /// policy; a stand-in for hand-written expert rules.
    ExpertHeuristic,
    Powrl,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::DoNothing, AgentKind::ExpertHeuristic, AgentKind::Powrl];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::DoNothing => "do_nothing",
            AgentKind::ExpertHeuristic => "expert_heuristic",
            AgentKind::Powrl => "powrl",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

/// One finished episode.
#[derive(Debug, Clone)]
pub struct EpisodeRun {
    pub log: EpisodeLog,
    pub decisions: Vec<Option<Decision>>,
    /// Total reward of every step, in order.
    pub rewards: Vec<f64>,
    pub steps_survived: usize,
    pub max_steps: usize,
    pub total_reward: f64,
    pub done_reason: Option<DoneReason>,
}

impl EpisodeRun {
    /// `(step index, trace)` of every step where a policy was queried.
    pub fn policy_traces(&self) -> impl Iterator<Item = (usize, &PolicyTrace)> {
        self.decisions
            .iter()
            .enumerate()
            .filter_map(|(i, d)| d.as_ref().and_then(|d| d.trace.as_ref()).map(|t| (i, t)))
    }
}

/// Steps `env` to the end. With `controller = None` every step is
/// `DoNothing`.
pub fn run_episode(
    env: &mut Environment,
    mut controller: Option<(&mut Controller, &mut dyn Propose)>,
    actions: &ActionSet,
    meta: LogMeta,
) -> Result<EpisodeRun, ControllerError> {
    let mut log = EpisodeLog::new(meta);
    let mut decisions = Vec::new();
    let mut rewards = Vec::new();
    if let Some((c, _)) = controller.as_mut() {
        c.reset();
    }
    while !env.is_done() {
        let decision = match controller.as_mut() {
            Some((c, p)) => Some(c.decide(env, &mut **p, actions)?),
            None => None,
        };
        let action = decision.as_ref().map_or(Action::DoNothing, |d| d.action.clone());
        let result = env.step(&action)?;
        log.push(StepRecord::new(&result, decision.as_ref()));
        rewards.push(result.reward);
        decisions.push(decision);
    }
    Ok(EpisodeRun {
        log,
        decisions,
        rewards,
        steps_survived: env.steps_survived(),
        max_steps: env.chronic().steps().saturating_sub(1),
        total_reward: env.total_reward(),
        done_reason: env.done_reason(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub env: EnvConfig,
    pub controller: ControllerConfig,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { env: EnvConfig::default(), controller: ControllerConfig::default(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub agent: AgentKind,
    pub chronic: String,
    pub seed: u64,
    pub steps_survived: usize,
    pub max_steps: usize,
    pub survival_pct: f64,
    pub total_reward: f64,
    pub done_reason: Option<DoneReason>,
    /// Not covered by the determinism contract.
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// Same order as `rows`.
    pub logs: Vec<EpisodeLog>,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("the powrl agent needs policy parameters")]
    MissingPolicy,
    #[error("policy expects {expected} input features and {expected_actions} actions; grid gives {got} features and the action set has {got_actions}")]
    DimensionMismatch { expected: usize, got: usize, expected_actions: usize, got_actions: usize },
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Seed of the evaluation episode on chronic `i`.
pub fn episode_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, 0xE7A1, i as u64)
}

/// Runs one agent on one chronic.
pub fn run_agent(
    grid: &Arc<Grid>,
    chronic: &Arc<Chronic>,
    actions: &ActionSet,
    agent: AgentKind,
    params: Option<&PolicyParams>,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<EpisodeRun, EvalError> {
    let mut env = Environment::new(grid.clone(), chronic.clone(), cfg.env.clone(), seed)?;
    let meta = LogMeta { grid: grid.name.clone(), chronic: chronic.id.clone(), seed, agent: agent.as_str().into() };
    let mut controller = Controller::new(cfg.controller.clone())?;
    Ok(match agent {
        AgentKind::DoNothing => run_episode(&mut env, None, actions, meta)?,
        AgentKind::ExpertHeuristic => run_episode(&mut env, Some((&mut controller, &mut Exhaustive)), actions, meta)?,
        AgentKind::Powrl => {
            let params = params.ok_or(EvalError::MissingPolicy)?;
            let mut proposer = PolicyProposer::greedy(params);
            run_episode(&mut env, Some((&mut controller, &mut proposer)), actions, meta)?
        }
    })
}

pub fn check_policy(grid: &Grid, actions: &ActionSet, params: &PolicyParams) -> Result<(), EvalError> {
    let got = crate::ppo::feature_len(grid);
    if params.input_dim() != got || params.n_actions() != actions.len() {
        return Err(EvalError::DimensionMismatch {
            expected: params.input_dim(),
            got,
            expected_actions: params.n_actions(),
            got_actions: actions.len(),
        });
    }
    Ok(())
}

/// Every agent on every chronic; rows ordered by agent, then chronic.
pub fn evaluate(
    grid: &Arc<Grid>,
    chronics: &[Arc<Chronic>],
    actions: &ActionSet,
    agents: &[AgentKind],
    params: Option<&PolicyParams>,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if agents.contains(&AgentKind::Powrl) {
        check_policy(grid, actions, params.ok_or(EvalError::MissingPolicy)?)?;
    }
    let jobs: Vec<(AgentKind, usize)> =
        agents.iter().flat_map(|&a| (0..chronics.len()).map(move |i| (a, i))).collect();
    let results: Vec<Result<(EvalRow, EpisodeLog), EvalError>> = jobs
        .par_iter()
        .map(|&(agent, i)| {
            let seed = episode_seed(cfg.seed, i);
            let start = Instant::now();
            let run = run_agent(grid, &chronics[i], actions, agent, params, cfg, seed)?;
            let row = EvalRow {
                agent,
                chronic: chronics[i].id.clone(),
                seed,
                steps_survived: run.steps_survived,
                max_steps: run.max_steps,
                survival_pct: if run.max_steps == 0 { 100.0 } else { 100.0 * run.steps_survived as f64 / run.max_steps as f64 },
                total_reward: run.total_reward,
                done_reason: run.done_reason,
                wall_seconds: start.elapsed().as_secs_f64(),
            };
            Ok((row, run.log))
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut logs = Vec::with_capacity(results.len());
    for r in results {
        let (row, log) = r?;
        rows.push(row);
        logs.push(log);
    }
    Ok(EvalReport { rows, logs })
}

/// Median of a non-empty sample (mean of the middle pair for even sizes).
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent: AgentKind,
    pub episodes: usize,
    pub median_survival: f64,
    pub mean_survival_pct: f64,
    pub full_survivals: usize,
    pub mean_reward: f64,
}

impl EvalReport {
    pub fn survival(&self, agent: AgentKind) -> Vec<f64> {
        self.rows.iter().filter(|r| r.agent == agent).map(|r| r.steps_survived as f64).collect()
    }

    pub fn summary(&self) -> Vec<AgentSummary> {
        let mut agents: Vec<AgentKind> = Vec::new();
        for r in &self.rows {
            if !agents.contains(&r.agent) {
                agents.push(r.agent);
            }
        }
        agents
            .into_iter()
            .map(|agent| {
                let rows: Vec<&EvalRow> = self.rows.iter().filter(|r| r.agent == agent).collect();
                let n = rows.len() as f64;
                AgentSummary {
                    agent,
                    episodes: rows.len(),
                    median_survival: median(&self.survival(agent)),
                    mean_survival_pct: rows.iter().map(|r| r.survival_pct).sum::<f64>() / n,
                    full_survivals: rows.iter().filter(|r| r.steps_survived == r.max_steps).count(),
                    mean_reward: rows.iter().map(|r| r.total_reward).sum::<f64>() / n,
                }
            })
            .collect()
    }

    /// Human-readable table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{:<18} {:<28} {:>9} {:>9} {:>12} {:<20}", "agent", "chronic", "survived", "percent", "reward", "end").unwrap();
        for r in &self.rows {
            let end = r.done_reason.map_or("-".to_string(), |d| format!("{d:?}"));
            writeln!(
                s,
                "{:<18} {:<28} {:>4}/{:<4} {:>8.1}% {:>12.2} {:<20}",
                r.agent.as_str(),
                r.chronic,
                r.steps_survived,
                r.max_steps,
                r.survival_pct,
                r.total_reward,
                end
            )
            .unwrap();
        }
        s.push('\n');
        writeln!(s, "{:<18} {:>8} {:>10} {:>10} {:>6} {:>12}", "agent", "episodes", "median", "mean %", "full", "mean reward").unwrap();
        for a in self.summary() {
            writeln!(
                s,
                "{:<18} {:>8} {:>10.1} {:>9.1}% {:>6} {:>12.2}",
                a.agent.as_str(),
                a.episodes,
                a.median_survival,
                a.mean_survival_pct,
                a.full_survivals,
                a.mean_reward
            )
            .unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn agent_names_roundtrip() {
        for a in AgentKind::ALL {
            assert_eq!(AgentKind::parse(a.as_str()), Some(a));
        }
    }
}
