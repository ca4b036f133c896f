//! Which substations an agent reconfigures, and in which sequences.
//!
//! Counted actions are applied `SetSubstation` actions, except those the
//! controller issued as recovery (restoring the reference layout). An
//! overflow event is a maximal run of consecutive records taken in an
//! overflow branch; its substation sequence is the list of counted actions
//! inside the run.

use crate::controller::Branch;
use crate::environment::Action;
use crate::scenario::log::{EpisodeLog, StepRecord};
use crate::topology::SubstationAction;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

pub const MAX_NGRAM: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGram {
    pub substations: Vec<usize>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub episodes: usize,
    pub steps: usize,
    /// Index = substation id.
    pub per_substation: Vec<usize>,
    pub topology_actions: usize,
    pub distinct_actions: usize,
    pub distinct_substations: usize,
    pub overflow_events: usize,
    /// Sorted by count (descending), then length, then lexicographically.
    pub ngrams: Vec<NGram>,
}

/// The substation action a record counts as, if any.
pub fn counted_action(r: &StepRecord) -> Option<&SubstationAction> {
    match &r.action {
        Action::SetSubstation(sa) if r.decision.as_ref().map(|d| d.branch) != Some(Branch::Recovery) => Some(sa),
        _ => None,
    }
}

fn in_overflow(r: &StepRecord) -> bool {
    r.decision.as_ref().is_some_and(|d| d.branch.is_rl())
}

/// Substation sequences of all overflow events, in log order.
pub fn overflow_sequences(logs: &[EpisodeLog]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for log in logs {
        let mut current: Option<Vec<usize>> = None;
        for r in &log.records {
            if in_overflow(r) {
                let seq = current.get_or_insert_with(Vec::new);
                if let Some(sa) = counted_action(r) {
                    seq.push(sa.substation);
                }
            } else if let Some(seq) = current.take() {
                out.push(seq);
            }
        }
        if let Some(seq) = current.take() {
            out.push(seq);
        }
    }
    out
}

/// `n_substations` sizes the per-substation table; ids seen beyond it grow
/// the table.
pub fn analyze(logs: &[EpisodeLog], n_substations: usize, max_n: usize) -> DiversityReport {
    let mut per_substation = vec![0usize; n_substations];
    let mut distinct = BTreeSet::new();
    let mut steps = 0;
    let mut total = 0;
    for log in logs {
        steps += log.records.len();
        for r in &log.records {
            if let Some(sa) = counted_action(r) {
                if sa.substation >= per_substation.len() {
                    per_substation.resize(sa.substation + 1, 0);
                }
                per_substation[sa.substation] += 1;
                distinct.insert(sa.clone());
                total += 1;
            }
        }
    }
    let sequences = overflow_sequences(logs);
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for seq in &sequences {
        for n in 1..=max_n.min(seq.len()) {
            for w in seq.windows(n) {
                *counts.entry(w.to_vec()).or_default() += 1;
            }
        }
    }
    let mut ngrams: Vec<NGram> = counts.into_iter().map(|(substations, count)| NGram { substations, count }).collect();
    ngrams.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then(a.substations.len().cmp(&b.substations.len()))
            .then(a.substations.cmp(&b.substations))
    });
    DiversityReport {
        episodes: logs.len(),
        steps,
        distinct_substations: per_substation.iter().filter(|&&c| c > 0).count(),
        per_substation,
        topology_actions: total,
        distinct_actions: distinct.len(),
        overflow_events: sequences.len(),
        ngrams,
    }
}

impl DiversityReport {
    pub fn table(&self, top: usize) -> String {
        let mut s = String::new();
        writeln!(s, "episodes {}  steps {}  topology actions {}", self.episodes, self.steps, self.topology_actions).unwrap();
        writeln!(
            s,
            "distinct actions {}  distinct substations {}  overflow events {}",
            self.distinct_actions, self.distinct_substations, self.overflow_events
        )
        .unwrap();
        s.push_str("\nsubstation  actions\n");
        for (sub, c) in self.per_substation.iter().enumerate() {
            writeln!(s, "{sub:>10}  {c:>7}").unwrap();
        }
        s.push_str("\nsequence                 count\n");
        for g in self.ngrams.iter().take(top) {
            let seq: Vec<String> = g.substations.iter().map(usize::to_string).collect();
            writeln!(s, "{:<24} {:>5}", seq.join(" > "), g.count).unwrap();
        }
        s
    }
}
