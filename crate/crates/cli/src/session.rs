//! An interactive episode: environment, controller and the log being
//! written. `powrl run` and every service session drive one of these.

use powrl_core::controller::{Branch, Controller, ControllerConfig, ControllerError, Decision, Exhaustive};
use powrl_core::environment::{Action, EnvConfig, EnvError, Environment, SimulationResult, StepResult};
use powrl_core::evaluation::{check_policy, AgentKind, EvalError};
use powrl_core::grid::Grid;
use powrl_core::ppo::{PolicyParams, PolicyProposer};
use powrl_core::scenario::log::{EpisodeLog, LogMeta, StepRecord};
use powrl_core::scenario::Chronic;
use powrl_core::topology::ActionSet;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("episode is already done")]
    Done,
    #[error("malformed action: {0}")]
    Malformed(String),
    #[error("{0}")]
    Setup(String),
    #[error("{0}")]
    Runtime(String),
}

impl From<EnvError> for SessionError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::EpisodeDone => SessionError::Done,
            EnvError::InvalidAction(m) => SessionError::Malformed(m),
            other => SessionError::Runtime(other.to_string()),
        }
    }
}

impl From<ControllerError> for SessionError {
    fn from(e: ControllerError) -> Self {
        match e {
            ControllerError::Env(e) => e.into(),
            other => SessionError::Runtime(other.to_string()),
        }
    }
}

/// What to apply at the next step.
#[derive(Debug, Clone, PartialEq)]
pub enum StepRequest {
    /// Apply the controller's current recommendation.
    Accept,
    Act(Action),
}

impl Serialize for StepRequest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            StepRequest::Accept => s.serialize_str("accept"),
            StepRequest::Act(a) => a.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for StepRequest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::String(s) if s == "accept" => Ok(StepRequest::Accept),
            serde_json::Value::String(s) => Err(serde::de::Error::custom(format!("unknown keyword `{s}` (expected `accept`)"))),
            other => serde_json::from_value(other).map(StepRequest::Act).map_err(serde::de::Error::custom),
        }
    }
}

/// Response to a committed step.
#[derive(Debug, Clone, Serialize)]
pub struct StepOutcome {
    pub result: StepResult,
    /// The recommendation that was applied, for accepted steps.
    pub decision: Option<Decision>,
    pub state_hash: u64,
}

#[derive(Debug, Clone)]
pub struct SessionSpec {
    pub grid: Arc<Grid>,
    pub chronic: Arc<Chronic>,
    pub actions: Arc<ActionSet>,
    pub agent: AgentKind,
    pub params: Option<Arc<PolicyParams>>,
    pub env: EnvConfig,
    pub controller: ControllerConfig,
    pub seed: u64,
}

pub struct Session {
    spec: SessionSpec,
    env: Environment,
    controller: Controller,
    /// Recommendation for the current row and the controller state it leaves.
    pending: Option<(usize, Decision, Controller)>,
    log: EpisodeLog,
}

impl Session {
    pub fn new(spec: SessionSpec) -> Result<Self, SessionError> {
        if spec.actions.grid_name != spec.grid.name {
            return Err(SessionError::Setup(format!(
                "action set was built for grid `{}`, session runs `{}`",
                spec.actions.grid_name, spec.grid.name
            )));
        }
        match (spec.agent, &spec.params) {
            (AgentKind::Powrl, None) => return Err(SessionError::Setup(EvalError::MissingPolicy.to_string())),
            (AgentKind::Powrl, Some(p)) => {
                check_policy(&spec.grid, &spec.actions, p).map_err(|e| SessionError::Setup(e.to_string()))?
            }
            _ => {}
        }
        let env = Environment::new(spec.grid.clone(), spec.chronic.clone(), spec.env.clone(), spec.seed)
            .map_err(|e| SessionError::Setup(e.to_string()))?;
        let controller = Controller::new(spec.controller.clone()).map_err(|e| SessionError::Setup(e.to_string()))?;
        let meta = LogMeta {
            grid: spec.grid.name.clone(),
            chronic: spec.chronic.id.clone(),
            seed: spec.seed,
            agent: spec.agent.as_str().into(),
        };
        Ok(Session { spec, env, controller, pending: None, log: EpisodeLog::new(meta) })
    }

    pub fn spec(&self) -> &SessionSpec {
        &self.spec
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn log(&self) -> &EpisodeLog {
        &self.log
    }

    pub fn is_done(&self) -> bool {
        self.env.is_done()
    }

    pub fn state_hash(&self) -> u64 {
        self.env.state_hash()
    }

    /// Look-ahead of `action`; leaves the session untouched.
    pub fn simulate(&self, action: &Action) -> Result<SimulationResult, SessionError> {
        Ok(self.env.simulate(action)?)
    }

    fn compute_recommendation(&self) -> Result<(Decision, Controller), SessionError> {
        let mut controller = self.controller.clone();
        let decision = match self.spec.agent {
            AgentKind::DoNothing => {
                let rho = self.env.simulate(&Action::DoNothing)?.rho_max;
                Decision {
                    action: Action::DoNothing,
                    branch: Branch::DoNothing,
                    rho_do_nothing: rho,
                    rho_chosen: rho,
                    action_index: self.spec.actions.index_of(&Action::DoNothing),
                    candidates: vec![],
                    trace: None,
                }
            }
            AgentKind::ExpertHeuristic => controller.decide(&self.env, &mut Exhaustive, &self.spec.actions)?,
            AgentKind::Powrl => {
                let params = self.spec.params.as_ref().expect("checked at construction");
                controller.decide(&self.env, &mut PolicyProposer::greedy(params), &self.spec.actions)?
            }
        };
        Ok((decision, controller))
    }

    /// The controller's choice for the current step. Repeated calls return
    /// the same decision and do not advance the controller.
    pub fn recommendation(&mut self) -> Result<Decision, SessionError> {
        if self.env.is_done() {
            return Err(SessionError::Done);
        }
        let t = self.env.time_step();
        if !matches!(&self.pending, Some((row, _, _)) if *row == t) {
            let (d, c) = self.compute_recommendation()?;
            self.pending = Some((t, d, c));
        }
        Ok(self.pending.as_ref().expect("just filled").1.clone())
    }

    pub fn step(&mut self, request: &StepRequest) -> Result<StepOutcome, SessionError> {
        if self.env.is_done() {
            return Err(SessionError::Done);
        }
        let (action, accepted) = match request {
            StepRequest::Accept => {
                let d = self.recommendation()?;
                (d.action.clone(), Some(d))
            }
            StepRequest::Act(a) => (a.clone(), None),
        };
        let result = self.env.step(&action)?;
        if accepted.is_some() {
            let (_, _, controller) = self.pending.take().expect("accepted recommendation is cached");
            self.controller = controller;
        } else {
            self.pending = None;
        }
        // do-nothing episodes carry no decision records, as in batch runs
        let logged = accepted.as_ref().filter(|_| self.spec.agent != AgentKind::DoNothing);
        self.log.push(StepRecord::new(&result, logged));
        Ok(StepOutcome { result, decision: accepted, state_hash: self.env.state_hash() })
    }

    /// Accepts recommendations until the episode ends or `max_steps` steps
    /// have been taken in this call.
    pub fn run(&mut self, max_steps: Option<usize>) -> Result<usize, SessionError> {
        let mut n = 0;
        while !self.env.is_done() && max_steps.is_none_or(|m| n < m) {
            self.step(&StepRequest::Accept)?;
            n += 1;
        }
        Ok(n)
    }
}
