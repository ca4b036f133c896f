//! Reduced action space: the substation reconfigurations with the largest
//! one-step relief of the maximum line loading over stressed states.

use super::{enumerate_valid_topologies, SubstationAction, TopologyError};
use crate::environment::{Action, EnvConfig, EnvError, Environment};
use crate::grid::Grid;
use crate::scenario::Chronic;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::sync::Arc;

/// Infeasible look-aheads count as this loading when scoring relief.
pub const RELIEF_RHO_CAP: f64 = 3.0;

/// Reduced-set size relative to the full action count (240 of ~70k).
const BUDGET_RATIO: f64 = 240.0 / 70_000.0;
const MIN_BUDGET: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionRanking {
    /// Sorted by mean one-step relief over stressed states.
    Impact,
    /// No stressed state was found; sorted by substation size.
    ElementCount,
    /// Assembled by hand.
    Manual,
}

impl ActionRanking {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionRanking::Impact => "impact",
            ActionRanking::ElementCount => "element_count",
            ActionRanking::Manual => "manual",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "impact" => Some(ActionRanking::Impact),
            "element_count" => Some(ActionRanking::ElementCount),
            "manual" => Some(ActionRanking::Manual),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionEntry {
    pub action: Action,
    pub impact: f64,
}

impl ActionEntry {
    pub fn substation(&self) -> Option<usize> {
        self.action.substation()
    }
}

/// Ordered discrete action list; index 0 is always `DoNothing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSet {
    pub grid_name: String,
    pub ranking: ActionRanking,
    entries: Vec<ActionEntry>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ActionSetError {
    #[error("first action must be do-nothing")]
    MissingDoNothing,
    #[error("duplicate action at index {0}")]
    Duplicate(usize),
    #[error("action at index {0} is not a substation action")]
    NotTopological(usize),
    #[error("action at index {index}: {source}")]
    Shape { index: usize, source: TopologyError },
}

impl ActionSet {
    /// Prepends `DoNothing` to the given substation actions.
    pub fn new(
        grid_name: impl Into<String>,
        ranking: ActionRanking,
        actions: Vec<(SubstationAction, f64)>,
    ) -> Result<Self, ActionSetError> {
        let mut entries = vec![ActionEntry { action: Action::DoNothing, impact: 0.0 }];
        entries.extend(actions.into_iter().map(|(a, impact)| ActionEntry { action: Action::SetSubstation(a), impact }));
        Self::from_entries(grid_name, ranking, entries)
    }

    pub fn from_entries(
        grid_name: impl Into<String>,
        ranking: ActionRanking,
        entries: Vec<ActionEntry>,
    ) -> Result<Self, ActionSetError> {
        if entries.first().map(|e| &e.action) != Some(&Action::DoNothing) {
            return Err(ActionSetError::MissingDoNothing);
        }
        let mut seen = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if i > 0 && !matches!(e.action, Action::SetSubstation(_)) {
                return Err(ActionSetError::NotTopological(i));
            }
            if !seen.insert(e.action.clone()) {
                return Err(ActionSetError::Duplicate(i));
            }
        }
        Ok(ActionSet { grid_name: grid_name.into(), ranking, entries })
    }

    /// Checks every substation action against `grid`.
    pub fn check(&self, grid: &Grid) -> Result<(), ActionSetError> {
        for (index, e) in self.entries.iter().enumerate() {
            if let Action::SetSubstation(sa) = &e.action {
                sa.check_shape(grid).map_err(|source| ActionSetError::Shape { index, source })?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ActionEntry] {
        &self.entries
    }

    pub fn action(&self, index: usize) -> &Action {
        &self.entries[index].action
    }

    pub fn index_of(&self, action: &Action) -> Option<usize> {
        self.entries.iter().position(|e| &e.action == action)
    }
}

/// `max(8, ⌈total · 240/70000⌉)`.
pub fn default_budget(total_actions: usize) -> usize {
    ((total_actions as f64 * BUDGET_RATIO).ceil() as usize).max(MIN_BUDGET)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionConfig {
    pub env: EnvConfig,
    pub seed: u64,
    /// A state counts as stressed when simulated do-nothing ρ_max reaches this.
    pub stress_rho: f64,
    /// Upper bound on sampled stressed states (evenly thinned).
    pub max_states: usize,
}

impl Default for ReductionConfig {
    fn default() -> Self {
        ReductionConfig { env: EnvConfig::default(), seed: 0, stress_rho: 0.95, max_states: 96 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReductionError {
    #[error("budget must be >= 1")]
    ZeroBudget,
    #[error("at least one chronic is required")]
    NoChronics,
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    ActionSet(#[from] ActionSetError),
}

/// Every valid, non-identity, non-bifurcating substation action of `grid`.
pub fn candidate_actions(grid: &Grid) -> Result<Vec<SubstationAction>, TopologyError> {
    let reference = grid.reference_topology();
    let mut out = Vec::new();
    for sub in grid.substations() {
        for a in enumerate_valid_topologies(sub)? {
            if a.is_all_bus_one() {
                continue;
            }
            let topo = a.apply(grid, &reference);
            if grid.electrical_graph(&topo).components() == 1 {
                out.push(a);
            }
        }
    }
    Ok(out)
}

/// Environments at every stressed state along do-nothing rollouts.
pub fn sample_stressed_states(
    grid: &Arc<Grid>,
    chronics: &[Arc<Chronic>],
    cfg: &ReductionConfig,
) -> Result<Vec<Environment>, EnvError> {
    let mut states = Vec::new();
    for (i, chronic) in chronics.iter().enumerate() {
        let mut env = Environment::new(grid.clone(), chronic.clone(), cfg.env.clone(), cfg.seed.wrapping_add(i as u64))?;
        while !env.is_done() {
            if env.simulate(&Action::DoNothing)?.rho_max >= cfg.stress_rho {
                states.push(env.clone());
            }
            env.step(&Action::DoNothing)?;
        }
    }
    if states.len() > cfg.max_states && cfg.max_states > 0 {
        let n = states.len();
        states = (0..cfg.max_states).map(|k| states[k * n / cfg.max_states].clone()).collect();
    }
    Ok(states)
}

/// Mean clamped relief `max(0, ρ_dn − ρ_a)` of `action` over `states`.
pub fn mean_relief(states: &[Environment], action: &Action) -> Result<f64, EnvError> {
    if states.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for env in states {
        let dn = env.simulate(&Action::DoNothing)?.rho_max.min(RELIEF_RHO_CAP);
        let a = env.simulate(action)?.rho_max.min(RELIEF_RHO_CAP);
        total += (dn - a).max(0.0);
    }
    Ok(total / states.len() as f64)
}

/// Keeps the `budget` highest-impact substation actions.
///
/// Ties break on lower substation id, then lexicographic assignment. When
/// no stressed state is found the ranking falls back to substation element
/// count (largest first).
pub fn reduce_action_space(
    grid: &Arc<Grid>,
    chronics: &[Arc<Chronic>],
    budget: usize,
    cfg: &ReductionConfig,
) -> Result<ActionSet, ReductionError> {
    if budget == 0 {
        return Err(ReductionError::ZeroBudget);
    }
    if chronics.is_empty() {
        return Err(ReductionError::NoChronics);
    }
    let candidates = candidate_actions(grid)?;
    let states = sample_stressed_states(grid, chronics, cfg)?;

    let (ranking, mut scored): (ActionRanking, Vec<(SubstationAction, f64)>) = if states.is_empty() {
        log::warn!("no stressed state sampled; ranking actions by substation size");
        let mut v: Vec<_> = candidates.into_iter().map(|a| (a, 0.0)).collect();
        v.sort_by(|(a, _), (b, _)| {
            let na = grid.substation(a.substation).n_elements();
            let nb = grid.substation(b.substation).n_elements();
            nb.cmp(&na).then_with(|| a.cmp(b))
        });
        (ActionRanking::ElementCount, v)
    } else {
        let impacts: Vec<Result<f64, EnvError>> = candidates
            .par_iter()
            .map(|a| mean_relief(&states, &Action::SetSubstation(a.clone())))
            .collect();
        let mut v = Vec::with_capacity(candidates.len());
        for (a, impact) in candidates.into_iter().zip(impacts) {
            v.push((a, impact?));
        }
        v.sort_by(|(a, ia), (b, ib)| ib.total_cmp(ia).then_with(|| a.cmp(b)));
        (ActionRanking::Impact, v)
    };
    scored.truncate(budget);
    Ok(ActionSet::new(grid.name.clone(), ranking, scored)?)
}
