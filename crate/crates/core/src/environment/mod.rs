//! Episode simulation of grid operation in 5-minute steps.
//!
//! One call to [`Environment::step`] runs, in this order:
//!
//! 1. legality check (cooldowns, maintenance); illegal actions become
//!    `DoNothing` and are flagged in [`StepInfo::illegal`];
//! 2. timers tick, then the action is applied and its cooldown starts;
//! 3. maintenance windows open or close for the next chronic row;
//! 4. the opponent may force a line out;
//! 5. injections advance to the next chronic row;
//! 6. DC power flow;
//! 7. overflow bookkeeping and automatic disconnection;
//! 8. re-solve after disconnections (cascading on hard overflow);
//! 9. step reward;
//! 10. termination check and terminal bonus or penalty.
//!
//! [`Environment::simulate`] runs steps 1–8 on a copy with the opponent
//! switched off, so it never changes the environment it is called on.

mod observation;
mod opponent;

pub use observation::{Observation, TimeFeatures};
pub use opponent::Opponent;

use crate::grid::{Bus, Grid, TopologyVector};
use crate::power_flow::{rho_max, solve_dc, FlowSolution, PowerFlowError};
use crate::scenario::Chronic;
use crate::topology::{SubstationAction, TopologyError};
use serde::{Deserialize, Serialize};
use std::hash::{Hash, Hasher};
use std::sync::Arc;

/// Strict upper bound of the first reward branch.
pub const REWARD_KNEE: f64 = 0.95;

/// ρ reported by [`Environment::simulate`] for an infeasible flow.
pub const INFEASIBLE_RHO: f64 = f64::INFINITY;

/// Step reward: `2 − ρ_max` below the knee, `2 − 2ρ_max` otherwise.
pub fn reward(rho_max: f64) -> f64 {
    if rho_max < REWARD_KNEE {
        2.0 - rho_max
    } else {
        2.0 - 2.0 * rho_max
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("episode is already done")]
    EpisodeDone,
    #[error("malformed action: {0}")]
    InvalidAction(String),
    #[error("initial state is infeasible: {0}")]
    InfeasibleInitialState(PowerFlowError),
    #[error("chronic is empty")]
    EmptyChronic,
    #[error("chronic does not match grid: {0}")]
    ChronicMismatch(String),
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
}

impl From<TopologyError> for EnvError {
    fn from(e: TopologyError) -> Self {
        EnvError::InvalidAction(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub overflow_steps_to_disconnect: u32,
    pub hard_overflow_rho: f64,
    pub line_cooldown: u32,
    pub substation_cooldown: u32,
    pub reconnect_cooldown_after_trip: u32,
    pub survive_bonus: f64,
    pub failure_penalty: f64,
    pub timestep_minutes: u32,
    /// End the episode (with the failure penalty) on an illegal action.
    pub terminate_on_illegal: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            overflow_steps_to_disconnect: 3,
            hard_overflow_rho: 2.0,
            line_cooldown: 3,
            substation_cooldown: 3,
            reconnect_cooldown_after_trip: 12,
            survive_bonus: 500.0,
            failure_penalty: -300.0,
            timestep_minutes: 5,
            terminate_on_illegal: false,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.overflow_steps_to_disconnect == 0
            || self.line_cooldown == 0
            || self.substation_cooldown == 0
            || self.reconnect_cooldown_after_trip == 0
        {
            return Err("all step counts must be >= 1".into());
        }
        if self.timestep_minutes != 5 {
            return Err("timestep is fixed at 5 minutes".into());
        }
        if !(self.hard_overflow_rho > 1.0) {
            return Err("hard_overflow_rho must exceed 1".into());
        }
        Ok(())
    }
}

/// Discrete control applied at one step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    DoNothing,
    SetSubstation(SubstationAction),
    ReconnectLine { line: usize, origin_bus: Bus, extremity_bus: Bus },
    DisconnectLine { line: usize },
}

impl Action {
    pub fn reconnect(line: usize) -> Action {
        Action::ReconnectLine { line, origin_bus: Bus::One, extremity_bus: Bus::One }
    }

    pub fn substation(&self) -> Option<usize> {
        match self {
            Action::SetSubstation(sa) => Some(sa.substation),
            _ => None,
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            Action::ReconnectLine { line, .. } | Action::DisconnectLine { line } => Some(*line),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IllegalReason {
    SubstationCooldown,
    LineCooldown,
    UnderMaintenance,
    AlreadyConnected,
    AlreadyDisconnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoneReason {
    Survived,
    Blackout,
    LoadNotServed,
    IllegalActionCascade,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// What was actually applied (DoNothing when the request was illegal).
    pub applied: Action,
    pub illegal: Option<IllegalReason>,
    pub attacked_line: Option<usize>,
    pub tripped_lines: Vec<usize>,
    pub maintenance_started: Vec<usize>,
    pub step_reward: f64,
    pub terminal_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub done_reason: Option<DoneReason>,
    pub info: StepInfo,
}

/// Outcome of a look-ahead with [`Environment::simulate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub rho: Vec<f64>,
    /// `+∞` when the flow is infeasible.
    pub rho_max: f64,
    pub feasible: bool,
    pub illegal: Option<IllegalReason>,
}

struct Advance {
    illegal: Option<IllegalReason>,
    applied: Action,
    attacked_line: Option<usize>,
    tripped_lines: Vec<usize>,
    maintenance_started: Vec<usize>,
    flow: Result<(), PowerFlowError>,
}

/// A single grid-operation episode.
///
/// Cloning is cheap (the grid and chronic are shared) and yields a fully
/// independent copy.
#[derive(Debug, Clone)]
pub struct Environment {
    grid: Arc<Grid>,
    chronic: Arc<Chronic>,
    cfg: EnvConfig,
    seed: u64,
    t: usize,
    topo: TopologyVector,
    line_cooldown: Vec<u32>,
    sub_cooldown: Vec<u32>,
    time_overflow: Vec<u32>,
    opponent: Opponent,
    solution: Option<FlowSolution>,
    done: bool,
    done_reason: Option<DoneReason>,
    total_reward: f64,
    steps_survived: usize,
}

impl Environment {
    /// Builds the environment and resets it to chronic row 0.
    pub fn new(grid: Arc<Grid>, chronic: Arc<Chronic>, cfg: EnvConfig, seed: u64) -> Result<Self, EnvError> {
        cfg.validate().map_err(EnvError::InvalidConfig)?;
        if chronic.steps() == 0 {
            return Err(EnvError::EmptyChronic);
        }
        chronic
            .validate(&grid)
            .map_err(|e| EnvError::ChronicMismatch(e.to_string()))?;
        let n_lines = grid.n_lines();
        let n_subs = grid.n_substations();
        let mut env = Environment {
            topo: grid.reference_topology(),
            opponent: Opponent::new(chronic.opponent.clone(), seed),
            grid,
            chronic,
            cfg,
            seed,
            t: 0,
            line_cooldown: vec![0; n_lines],
            sub_cooldown: vec![0; n_subs],
            time_overflow: vec![0; n_lines],
            solution: None,
            done: false,
            done_reason: None,
            total_reward: 0.0,
            steps_survived: 0,
        };
        env.reset(seed)?;
        Ok(env)
    }

    /// Back to reference topology, zero timers, chronic row 0.
    pub fn reset(&mut self, seed: u64) -> Result<Observation, EnvError> {
        self.seed = seed;
        self.t = 0;
        self.topo = self.grid.reference_topology();
        self.line_cooldown.iter_mut().for_each(|c| *c = 0);
        self.sub_cooldown.iter_mut().for_each(|c| *c = 0);
        self.time_overflow.iter_mut().for_each(|c| *c = 0);
        self.opponent = Opponent::new(self.chronic.opponent.clone(), seed);
        self.done = false;
        self.done_reason = None;
        self.total_reward = 0.0;
        self.steps_survived = 0;
        for ev in &self.chronic.maintenance {
            if ev.start == 0 && ev.duration > 0 {
                self.topo.disconnect_line(&self.grid, ev.line);
            }
        }
        let inj = self.chronic.injection(0);
        let sol = solve_dc(&self.grid, &self.topo, &inj).map_err(EnvError::InfeasibleInitialState)?;
        self.solution = Some(sol);
        if self.chronic.steps() == 1 {
            self.done = true;
            self.done_reason = Some(DoneReason::Survived);
        }
        Ok(self.observation())
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn chronic(&self) -> &Arc<Chronic> {
        &self.chronic
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Current chronic row.
    pub fn time_step(&self) -> usize {
        self.t
    }

    pub fn topology(&self) -> &TopologyVector {
        &self.topo
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn done_reason(&self) -> Option<DoneReason> {
        self.done_reason
    }

    pub fn total_reward(&self) -> f64 {
        self.total_reward
    }

    /// Steps completed without grid failure.
    pub fn steps_survived(&self) -> usize {
        self.steps_survived
    }

    /// Last solved flow (None after a failure).
    pub fn solution(&self) -> Option<&FlowSolution> {
        self.solution.as_ref()
    }

    pub fn line_in_maintenance(&self, line: usize) -> bool {
        self.chronic.in_maintenance(line, self.t)
    }

    pub fn line_cooldowns(&self) -> &[u32] {
        &self.line_cooldown
    }

    pub fn substation_cooldowns(&self) -> &[u32] {
        &self.sub_cooldown
    }

    pub fn opponent(&self) -> &Opponent {
        &self.opponent
    }

    /// Replaces the topology and re-solves the current row. Intended for
    /// setting up what-if states; it does not touch timers.
    pub fn force_topology(&mut self, topo: TopologyVector) -> Result<(), EnvError> {
        topo.validate(&self.grid).map_err(|e| EnvError::InvalidAction(e.to_string()))?;
        let sol = solve_dc(&self.grid, &topo, &self.chronic.injection(self.t))
            .map_err(EnvError::InfeasibleInitialState)?;
        self.topo = topo;
        self.solution = Some(sol);
        Ok(())
    }

    pub fn observation(&self) -> Observation {
        Observation::build(self)
    }

    /// Hash of the full dynamic state; equal hashes before and after a call
    /// mean the call did not mutate the environment.
    pub fn state_hash(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.t.hash(&mut h);
        self.topo.hash(&mut h);
        self.line_cooldown.hash(&mut h);
        self.sub_cooldown.hash(&mut h);
        self.time_overflow.hash(&mut h);
        self.opponent.hash_state(&mut h);
        if let Some(sol) = &self.solution {
            for x in sol.p_flow.iter().chain(&sol.rho).chain(&sol.theta) {
                x.to_bits().hash(&mut h);
            }
        }
        self.done.hash(&mut h);
        self.done_reason.hash(&mut h);
        self.total_reward.to_bits().hash(&mut h);
        self.steps_survived.hash(&mut h);
        h.finish()
    }

    /// Legality of `action` in the current state, or a shape error.
    pub fn check_action(&self, action: &Action) -> Result<Option<IllegalReason>, EnvError> {
        let grid = &self.grid;
        Ok(match action {
            Action::DoNothing => None,
            Action::SetSubstation(sa) => {
                sa.check_shape(grid)?;
                (self.sub_cooldown[sa.substation] > 0).then_some(IllegalReason::SubstationCooldown)
            }
            Action::ReconnectLine { line, origin_bus, extremity_bus } => {
                self.check_line(*line)?;
                if !origin_bus.is_connected() || !extremity_bus.is_connected() {
                    return Err(EnvError::InvalidAction("reconnection needs bus 1 or 2 at both ends".into()));
                }
                if self.topo.line_connected(grid, *line) {
                    Some(IllegalReason::AlreadyConnected)
                } else if self.line_in_maintenance(*line) {
                    Some(IllegalReason::UnderMaintenance)
                } else if self.line_cooldown[*line] > 0 {
                    Some(IllegalReason::LineCooldown)
                } else {
                    None
                }
            }
            Action::DisconnectLine { line } => {
                self.check_line(*line)?;
                if !self.topo.line_connected(grid, *line) {
                    Some(IllegalReason::AlreadyDisconnected)
                } else if self.line_cooldown[*line] > 0 {
                    Some(IllegalReason::LineCooldown)
                } else {
                    None
                }
            }
        })
    }

    fn check_line(&self, line: usize) -> Result<(), EnvError> {
        if line >= self.grid.n_lines() {
            return Err(EnvError::InvalidAction(format!("unknown line {line}")));
        }
        Ok(())
    }

    /// Stages 1–8 of a step.
    fn advance(&mut self, action: &Action, with_opponent: bool) -> Result<Advance, EnvError> {
        // (1) legality
        let illegal = self.check_action(action)?;
        let applied = if illegal.is_some() { Action::DoNothing } else { action.clone() };

        // (2) time passes, then the action takes effect
        self.line_cooldown.iter_mut().for_each(|c| *c = c.saturating_sub(1));
        self.sub_cooldown.iter_mut().for_each(|c| *c = c.saturating_sub(1));
        self.opponent.tick();
        match &applied {
            Action::DoNothing => {}
            Action::SetSubstation(sa) => {
                self.topo = sa.apply(&self.grid, &self.topo);
                self.sub_cooldown[sa.substation] = self.cfg.substation_cooldown;
            }
            Action::ReconnectLine { line, origin_bus, extremity_bus } => {
                self.topo.connect_line(&self.grid, *line, *origin_bus, *extremity_bus);
                self.line_cooldown[*line] = self.cfg.line_cooldown;
            }
            Action::DisconnectLine { line } => {
                self.topo.disconnect_line(&self.grid, *line);
                self.line_cooldown[*line] = self.cfg.line_cooldown;
                self.time_overflow[*line] = 0;
            }
        }

        // (3) maintenance for the next row
        let next = self.t + 1;
        let mut maintenance_started = Vec::new();
        for ev in &self.chronic.maintenance {
            if ev.start == next && ev.duration > 0 {
                self.topo.disconnect_line(&self.grid, ev.line);
                self.time_overflow[ev.line] = 0;
                maintenance_started.push(ev.line);
            }
        }

        // (4) opponent
        let mut attacked_line = None;
        if with_opponent {
            let rho = self.solution.as_ref().map(|s| s.rho.clone()).unwrap_or_default();
            let connected: Vec<bool> =
                (0..self.grid.n_lines()).map(|l| self.topo.line_connected(&self.grid, l)).collect();
            if let Some(l) = self.opponent.act(&rho, &connected) {
                self.topo.disconnect_line(&self.grid, l);
                self.time_overflow[l] = 0;
                let down = self.opponent.schedule().duration;
                self.line_cooldown[l] = self.line_cooldown[l].max(down);
                attacked_line = Some(l);
            }
        }

        // (5) injections
        self.t = next;
        let inj = self.chronic.injection(self.t);

        // (6) power flow
        let mut tripped_lines = Vec::new();
        let sol = match solve_dc(&self.grid, &self.topo, &inj) {
            Ok(s) => s,
            Err(e) => {
                self.solution = None;
                return Ok(Advance { illegal, applied, attacked_line, tripped_lines, maintenance_started, flow: Err(e) });
            }
        };

        // (7) overflow bookkeeping
        let mut trip = Vec::new();
        for l in 0..self.grid.n_lines() {
            if !self.topo.line_connected(&self.grid, l) {
                self.time_overflow[l] = 0;
                continue;
            }
            if sol.rho[l] > 1.0 {
                self.time_overflow[l] += 1;
            } else {
                self.time_overflow[l] = 0;
            }
            if self.time_overflow[l] >= self.cfg.overflow_steps_to_disconnect
                || sol.rho[l] >= self.cfg.hard_overflow_rho
            {
                trip.push(l);
            }
        }

        // (8) re-solve, cascading on hard overflow
        let mut sol = sol;
        while !trip.is_empty() {
            for &l in &trip {
                self.topo.disconnect_line(&self.grid, l);
                self.time_overflow[l] = 0;
                self.line_cooldown[l] = self.line_cooldown[l].max(self.cfg.reconnect_cooldown_after_trip);
            }
            tripped_lines.extend(trip.iter().copied());
            sol = match solve_dc(&self.grid, &self.topo, &inj) {
                Ok(s) => s,
                Err(e) => {
                    self.solution = None;
                    return Ok(Advance { illegal, applied, attacked_line, tripped_lines, maintenance_started, flow: Err(e) });
                }
            };
            trip = (0..self.grid.n_lines())
                .filter(|&l| self.topo.line_connected(&self.grid, l) && sol.rho[l] >= self.cfg.hard_overflow_rho)
                .collect();
        }
        self.solution = Some(sol);
        Ok(Advance { illegal, applied, attacked_line, tripped_lines, maintenance_started, flow: Ok(()) })
    }

    /// Applies `action` and advances one 5-minute step.
    pub fn step(&mut self, action: &Action) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        if self.cfg.terminate_on_illegal {
            if let Some(reason) = self.check_action(action)? {
                return Ok(self.finish_illegal(reason));
            }
        }
        let adv = self.advance(action, true)?;

        // (9) step reward
        let step_reward = match &adv.flow {
            Ok(()) => reward(self.solution.as_ref().map_or(0.0, |s| s.rho_max())),
            Err(_) => 0.0,
        };

        // (10) termination
        let (done_reason, terminal_reward) = match &adv.flow {
            Err(PowerFlowError::IslandedGrid { .. }) => (Some(DoneReason::LoadNotServed), self.cfg.failure_penalty),
            Err(_) => (Some(DoneReason::Blackout), self.cfg.failure_penalty),
            Ok(()) => {
                self.steps_survived += 1;
                if self.t + 1 >= self.chronic.steps() {
                    (Some(DoneReason::Survived), self.cfg.survive_bonus)
                } else {
                    (None, 0.0)
                }
            }
        };
        self.done = done_reason.is_some();
        self.done_reason = done_reason;
        let total = step_reward + terminal_reward;
        self.total_reward += total;
        Ok(StepResult {
            observation: self.observation(),
            reward: total,
            done: self.done,
            done_reason,
            info: StepInfo {
                applied: adv.applied,
                illegal: adv.illegal,
                attacked_line: adv.attacked_line,
                tripped_lines: adv.tripped_lines,
                maintenance_started: adv.maintenance_started,
                step_reward,
                terminal_reward,
            },
        })
    }

    fn finish_illegal(&mut self, reason: IllegalReason) -> StepResult {
        self.done = true;
        self.done_reason = Some(DoneReason::IllegalActionCascade);
        self.total_reward += self.cfg.failure_penalty;
        StepResult {
            observation: self.observation(),
            reward: self.cfg.failure_penalty,
            done: true,
            done_reason: self.done_reason,
            info: StepInfo {
                applied: Action::DoNothing,
                illegal: Some(reason),
                attacked_line: None,
                tripped_lines: vec![],
                maintenance_started: vec![],
                step_reward: 0.0,
                terminal_reward: self.cfg.failure_penalty,
            },
        }
    }

    /// Look-ahead of `action` against the next row's injections, without
    /// the opponent. Leaves `self` untouched.
    pub fn simulate(&self, action: &Action) -> Result<SimulationResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        let mut copy = self.clone();
        let adv = copy.advance(action, false)?;
        Ok(match (adv.flow, copy.solution) {
            (Ok(()), Some(sol)) => SimulationResult {
                rho_max: rho_max(&sol.rho),
                rho: sol.rho,
                feasible: true,
                illegal: adv.illegal,
            },
            _ => SimulationResult {
                rho: vec![0.0; self.grid.n_lines()],
                rho_max: INFEASIBLE_RHO,
                feasible: false,
                illegal: adv.illegal,
            },
        })
    }
}
