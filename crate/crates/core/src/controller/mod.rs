//! Threshold-gated dispatch between do-nothing, recovery, line
//! reconnection and learned topology actions.
//!
//! Per step:
//!
//! * `ρ_dn < threshold`: reconnect the lowest-id reconnectable line if any;
//!   else restore the lowest-id deviated substation when that simulates
//!   safe; else do nothing.
//! * otherwise: a pending reconnection from the previous overflow step is
//!   issued first if it does not worsen the simulated loading. If not, a
//!   [`Propose`] implementation ranks the action set, every proposed
//!   candidate is simulated, and the lowest simulated `ρ_max` wins (ties to
//!   the lower index, `DoNothing` at index 0 always included).

use crate::environment::{Action, EnvError, Environment, Observation, REWARD_KNEE};
use crate::grid::Grid;
use crate::topology::{ActionSet, SubstationAction};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    pub rho_threshold: f64,
    pub rl_top_k: usize,
    pub recovery_enabled: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig { rho_threshold: REWARD_KNEE, rl_top_k: 5, recovery_enabled: true }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        if !(self.rho_threshold > 0.0 && self.rho_threshold <= 1.0) {
            return Err(ControllerError::InvalidConfig(format!(
                "rho_threshold must lie in (0, 1], got {}",
                self.rho_threshold
            )));
        }
        if self.rl_top_k == 0 {
            return Err(ControllerError::InvalidConfig("rl_top_k must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControllerError {
    #[error("topology is already the reference topology")]
    AlreadyAtReference,
    #[error("invalid controller config: {0}")]
    InvalidConfig(String),
    #[error("action set was built for grid `{set}`, environment runs `{grid}`")]
    GridMismatch { set: String, grid: String },
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    DoNothing,
    Recovery,
    Reconnect,
    RlAction,
    RlActionPlusReconnect,
}

impl Branch {
    /// Overflow branches, where the threshold was reached.
    pub fn is_rl(self) -> bool {
        matches!(self, Branch::RlAction | Branch::RlActionPlusReconnect)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Index into the action set.
    pub index: usize,
    pub rho_max: f64,
}

/// Data the learner needs from a step where the policy was queried.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTrace {
    pub state: Vec<f64>,
    pub action_index: usize,
    pub log_prob: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: Action,
    pub branch: Branch,
    pub rho_do_nothing: f64,
    pub rho_chosen: f64,
    /// Action-set index of `action`, when it came from the set.
    pub action_index: Option<usize>,
    /// Simulated candidates, in proposal order.
    pub candidates: Vec<Candidate>,
    #[serde(skip)]
    pub trace: Option<PolicyTrace>,
}

/// Suggestions for the overflow branch.
pub struct Proposal {
    /// Candidate indices to simulate, best first.
    pub indices: Vec<usize>,
    /// Full log-softmax over the action set, when a policy produced it.
    pub log_probs: Option<Vec<f64>>,
    pub value: Option<f64>,
    pub state: Option<Vec<f64>>,
}

/// Source of candidate actions in the overflow branch.
pub trait Propose {
    /// At most `k` indices among those with `allowed[i] == true`.
    fn propose(&mut self, obs: &Observation, allowed: &[bool], k: usize) -> Proposal;
}

/// Simulates every allowed action: the expert-heuristic stand-in.
#[derive(Debug, Default, Clone, Copy)]
pub struct Exhaustive;

impl Propose for Exhaustive {
    fn propose(&mut self, _obs: &Observation, allowed: &[bool], _k: usize) -> Proposal {
        Proposal {
            indices: (0..allowed.len()).filter(|&i| allowed[i]).collect(),
            log_probs: None,
            value: None,
            state: None,
        }
    }
}

/// Lines that are out, off cooldown and not under maintenance, by id.
pub fn reconnectable_lines(obs: &Observation) -> Vec<usize> {
    (0..obs.line_status.len())
        .filter(|&l| !obs.line_status[l] && obs.line_cooldown[l] == 0 && !obs.in_maintenance(l))
        .collect()
}

/// Restores the lowest-id deviated substation to bus 1.
pub fn recovery_action(grid: &Grid, obs: &Observation) -> Result<Action, ControllerError> {
    let sub = *obs.topo_vect.deviated_substations(grid).first().ok_or(ControllerError::AlreadyAtReference)?;
    Ok(Action::SetSubstation(SubstationAction::all_bus_one(grid.substation(sub))))
}

/// Which action-set entries may be proposed in the current state.
///
/// Index 0 (`DoNothing`) is never proposed since it is always simulated
/// anyway. Entries are masked when their substation is cooling down, when
/// they would not change the topology, or when they would split the
/// electrical graph.
pub fn action_mask(env: &Environment, actions: &ActionSet) -> Vec<bool> {
    let grid = env.grid();
    let topo = env.topology();
    let cooldown = env.substation_cooldowns();
    actions
        .entries()
        .iter()
        .map(|e| match &e.action {
            Action::SetSubstation(sa) => {
                cooldown[sa.substation] == 0
                    && !sa.is_noop_on(grid, topo)
                    && grid.electrical_graph(&sa.apply(grid, topo)).components() == 1
            }
            _ => false,
        })
        .collect()
}

/// The gated controller. It keeps one piece of state between steps: a
/// reconnection deferred from an overflow step.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    pending_reconnect: Option<usize>,
}

impl Controller {
    pub fn new(cfg: ControllerConfig) -> Result<Self, ControllerError> {
        cfg.validate()?;
        Ok(Controller { cfg, pending_reconnect: None })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    /// Forgets deferred work; call when the environment is reset.
    pub fn reset(&mut self) {
        self.pending_reconnect = None;
    }

    pub fn decide(
        &mut self,
        env: &Environment,
        proposer: &mut dyn Propose,
        actions: &ActionSet,
    ) -> Result<Decision, ControllerError> {
        if actions.grid_name != env.grid().name {
            return Err(ControllerError::GridMismatch { set: actions.grid_name.clone(), grid: env.grid().name.clone() });
        }
        let obs = env.observation();
        let grid = env.grid();
        let rho_dn = env.simulate(&Action::DoNothing)?.rho_max;
        let threshold = self.cfg.rho_threshold;
        let plain = |action: Action, branch: Branch, rho_chosen: f64| Decision {
            action_index: actions.index_of(&action),
            action,
            branch,
            rho_do_nothing: rho_dn,
            rho_chosen,
            candidates: vec![],
            trace: None,
        };

        if rho_dn < threshold {
            self.pending_reconnect = None;
            if let Some(&line) = reconnectable_lines(&obs).first() {
                let a = Action::reconnect(line);
                let rho = env.simulate(&a)?.rho_max;
                return Ok(plain(a, Branch::Reconnect, rho));
            }
            if self.cfg.recovery_enabled {
                if let Ok(a) = recovery_action(grid, &obs) {
                    if env.check_action(&a)?.is_none() {
                        let rho = env.simulate(&a)?.rho_max;
                        if rho < threshold {
                            return Ok(plain(a, Branch::Recovery, rho));
                        }
                    }
                }
            }
            return Ok(plain(Action::DoNothing, Branch::DoNothing, rho_dn));
        }

        if let Some(line) = self.pending_reconnect.take() {
            if reconnectable_lines(&obs).contains(&line) {
                let a = Action::reconnect(line);
                let rho = env.simulate(&a)?.rho_max;
                if rho <= rho_dn {
                    return Ok(plain(a, Branch::RlActionPlusReconnect, rho));
                }
            }
        }

        let allowed = action_mask(env, actions);
        let proposal = proposer.propose(&obs, &allowed, self.cfg.rl_top_k);
        let mut candidates = vec![Candidate { index: 0, rho_max: rho_dn }];
        for &i in &proposal.indices {
            if i == 0 || i >= actions.len() || !allowed[i] {
                continue;
            }
            let sim = env.simulate(actions.action(i))?;
            let rho = if sim.feasible && sim.illegal.is_none() { sim.rho_max } else { f64::INFINITY };
            candidates.push(Candidate { index: i, rho_max: rho });
        }
        let best = candidates
            .iter()
            .min_by(|a, b| a.rho_max.total_cmp(&b.rho_max).then(a.index.cmp(&b.index)))
            .cloned()
            .expect("do-nothing candidate is always present");
        let trace = match (proposal.state, proposal.log_probs, proposal.value) {
            (Some(state), Some(lp), Some(value)) => {
                Some(PolicyTrace { state, action_index: best.index, log_prob: lp[best.index], value })
            }
            _ => None,
        };
        self.pending_reconnect = reconnectable_lines(&obs).first().copied();
        Ok(Decision {
            action: actions.action(best.index).clone(),
            branch: Branch::RlAction,
            rho_do_nothing: rho_dn,
            rho_chosen: best.rho_max,
            action_index: Some(best.index),
            candidates,
            trace,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use std::sync::Arc;

    #[test]
    fn config_bounds() {
        assert!(ControllerConfig { rho_threshold: 0.0, ..Default::default() }.validate().is_err());
        assert!(ControllerConfig { rho_threshold: 1.01, ..Default::default() }.validate().is_err());
        assert!(ControllerConfig { rl_top_k: 0, ..Default::default() }.validate().is_err());
        ControllerConfig::default().validate().unwrap();
    }

    #[test]
    fn calm_reference_state_does_nothing() {
        let fx = fixtures::training();
        let grid = Arc::new(fx.grid.clone());
        let chronic = Arc::new(fixtures::easy_chronic(&fx, 10));
        let env = Environment::new(grid.clone(), chronic, Default::default(), 0).unwrap();
        let set = ActionSet::new(grid.name.clone(), crate::topology::ActionRanking::Manual, vec![]).unwrap();
        let mut c = Controller::new(ControllerConfig::default()).unwrap();
        let d = c.decide(&env, &mut Exhaustive, &set).unwrap();
        assert_eq!(d.branch, Branch::DoNothing);
        assert_eq!(d.action, Action::DoNothing);
        assert!(d.rho_do_nothing < 0.95);
    }

    #[test]
    fn recovery_at_reference_is_an_error() {
        let fx = fixtures::training();
        let grid = Arc::new(fx.grid.clone());
        let chronic = Arc::new(fixtures::easy_chronic(&fx, 4));
        let env = Environment::new(grid.clone(), chronic, Default::default(), 0).unwrap();
        assert_eq!(recovery_action(&grid, &env.observation()), Err(ControllerError::AlreadyAtReference));
    }
}
