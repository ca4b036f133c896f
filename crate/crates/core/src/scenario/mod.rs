//! Chronics (time-series scenarios) and the on-disk formats for grids,
//! chronics, action sets and episode logs.

mod generate;
mod io;
pub mod log;
mod text;

pub use generate::{generate_chronic, ChronicProfile};
pub use io::{
    load_action_set, load_chronic, load_chronic_for, load_grid, parse_action_set, parse_chronic,
    parse_grid, save_action_set, save_chronic, save_grid, write_action_set, write_chronic, write_grid,
};
pub use crate::ppo::checkpoint::{load_checkpoint, save_checkpoint};

use crate::grid::Grid;
use crate::power_flow::InjectionProfile;
use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("missing section [{0}]")]
    MissingSection(&'static str),
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
    #[error("expected header `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("unsupported {kind} version {found} (supported: {supported})")]
    Version { kind: &'static str, found: u32, supported: u32 },
    #[error("reference error: {0}")]
    Reference(String),
    #[error("invalid content: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaintenanceEvent {
    pub line: usize,
    pub start: usize,
    pub duration: usize,
}

impl MaintenanceEvent {
    pub fn covers(&self, t: usize) -> bool {
        self.start <= t && t < self.start + self.duration
    }
}

/// Parameters of the adversary for one chronic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpponentSchedule {
    pub targets: Vec<usize>,
    /// Attack probability per eligible step.
    pub probability: f64,
    /// Maximum number of attacks; `None` is unlimited.
    pub budget: Option<u32>,
    /// Steps an attacked line stays out.
    pub duration: u32,
    /// Minimum steps between two attacks.
    pub cooldown: u32,
}

impl OpponentSchedule {
    pub fn none() -> Self {
        OpponentSchedule { targets: vec![], probability: 0.0, budget: Some(0), duration: 1, cooldown: 0 }
    }
}

/// A scenario: injections per 5-minute row plus maintenance and attacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chronic {
    pub id: String,
    pub start: NaiveDateTime,
    /// `steps × n_gen` generator set-points.
    pub gen_p: Vec<Vec<f64>>,
    /// `steps × n_load` consumption.
    pub load_p: Vec<Vec<f64>>,
    pub maintenance: Vec<MaintenanceEvent>,
    pub opponent: OpponentSchedule,
}

impl Chronic {
    pub fn steps(&self) -> usize {
        self.gen_p.len()
    }

    pub fn injection(&self, t: usize) -> InjectionProfile {
        InjectionProfile { p_gen: self.gen_p[t].clone(), p_load: self.load_p[t].clone() }
    }

    pub fn in_maintenance(&self, line: usize, t: usize) -> bool {
        self.maintenance.iter().any(|ev| ev.line == line && ev.covers(t))
    }

    /// `(steps until next maintenance, duration)` at row `t`; see
    /// [`crate::environment::Observation::time_next_maintenance`].
    pub fn maintenance_timers(&self, line: usize, t: usize) -> (u32, u32) {
        let running = self
            .maintenance
            .iter()
            .filter(|ev| ev.line == line && ev.covers(t))
            .map(|ev| ev.start + ev.duration - t)
            .max();
        if let Some(remaining) = running {
            return (0, remaining as u32);
        }
        self.maintenance
            .iter()
            .filter(|ev| ev.line == line && ev.start > t && ev.duration > 0)
            .min_by_key(|ev| ev.start)
            .map_or((0, 0), |ev| ((ev.start - t) as u32, ev.duration as u32))
    }

    /// Internal consistency, independent of any grid.
    pub fn check(&self) -> Result<(), ScenarioError> {
        if self.load_p.len() != self.gen_p.len() {
            return Err(ScenarioError::Invalid(format!(
                "{} generator rows but {} load rows",
                self.gen_p.len(),
                self.load_p.len()
            )));
        }
        let width = |rows: &[Vec<f64>]| rows.first().map_or(0, |r| r.len());
        let (wg, wl) = (width(&self.gen_p), width(&self.load_p));
        for (t, (g, l)) in self.gen_p.iter().zip(&self.load_p).enumerate() {
            if g.len() != wg || l.len() != wl {
                return Err(ScenarioError::Invalid(format!("row {t} has inconsistent width")));
            }
            if g.iter().chain(l).any(|x| !x.is_finite()) {
                return Err(ScenarioError::Invalid(format!("row {t} has a non-finite value")));
            }
            if l.iter().any(|&x| x < 0.0) {
                return Err(ScenarioError::Invalid(format!("row {t} has negative load")));
            }
        }
        for ev in &self.maintenance {
            if ev.start >= self.steps() || ev.duration == 0 {
                return Err(ScenarioError::Invalid(format!(
                    "maintenance of line {} at {} for {} lies outside [0, {})",
                    ev.line,
                    ev.start,
                    ev.duration,
                    self.steps()
                )));
            }
        }
        let p = self.opponent.probability;
        if !(0.0..=1.0).contains(&p) {
            return Err(ScenarioError::Invalid(format!("opponent probability {p} not in [0, 1]")));
        }
        Ok(())
    }

    /// [`Chronic::check`] plus every element id referenced exists in `grid`.
    pub fn validate(&self, grid: &Grid) -> Result<(), ScenarioError> {
        self.check()?;
        if let (Some(g), Some(l)) = (self.gen_p.first(), self.load_p.first()) {
            if g.len() != grid.n_generators() || l.len() != grid.n_loads() {
                return Err(ScenarioError::Reference(format!(
                    "chronic has {} generators and {} loads, grid `{}` has {} and {}",
                    g.len(),
                    l.len(),
                    grid.name,
                    grid.n_generators(),
                    grid.n_loads()
                )));
            }
        }
        for ev in &self.maintenance {
            if ev.line >= grid.n_lines() {
                return Err(ScenarioError::Reference(format!(
                    "maintenance references line {} but grid `{}` has {} lines",
                    ev.line,
                    grid.name,
                    grid.n_lines()
                )));
            }
        }
        for &l in &self.opponent.targets {
            if l >= grid.n_lines() {
                return Err(ScenarioError::Reference(format!(
                    "opponent targets line {l} but grid `{}` has {} lines",
                    grid.name,
                    grid.n_lines()
                )));
            }
        }
        Ok(())
    }
}
