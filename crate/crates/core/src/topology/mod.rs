//! Busbar configurations of a single substation.
//!
//! For a double-busbar substation with `L` lines and `I` injections
//! (generators plus loads), an assignment is valid when every bus that hosts
//! an injection also hosts at least one line. Counting assignments up to the
//! bus-swap symmetry gives
//!
//! ```text
//! 2^(L+I-1) - 2^I + 1
//! ```
//!
//! since the only invalid partitions are those that isolate a non-empty set
//! of injections on a line-free bus.

mod reduction;

pub use reduction::{candidate_actions, mean_relief, sample_stressed_states, RELIEF_RHO_CAP, ReductionError, ActionSetError, 
    default_budget, reduce_action_space, ActionEntry, ActionRanking, ActionSet, ReductionConfig,
};

use crate::grid::{Bus, Element, Grid, Substation, TopologyVector};
use serde::{Deserialize, Serialize};

/// Largest substation that [`enumerate_valid_topologies`] will expand.
pub const MAX_ENUMERATED_ELEMENTS: usize = 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TopologyError {
    #[error("substation must have at least one line")]
    NoLines,
    #[error("topology count overflows 64 bits for {0} elements")]
    CountOverflow(usize),
    #[error("substation {substation} has {count} elements (limit {limit})")]
    TooManyElements { substation: usize, count: usize, limit: usize },
    #[error("action for substation {substation} has {got} assignments, expected {expected}")]
    AssignmentLength { substation: usize, got: usize, expected: usize },
    #[error("unknown substation {0}")]
    UnknownSubstation(usize),
    #[error("substation action may only use bus 1 or bus 2")]
    DisconnectedAssignment,
}

/// Number of valid double-busbar configurations, exact.
pub fn count_valid_topologies(n_line: usize, n_gen: usize, n_load: usize) -> Result<u64, TopologyError> {
    if n_line == 0 {
        return Err(TopologyError::NoLines);
    }
    let n_inj = n_gen + n_load;
    let n_tot = n_line + n_inj;
    let pow2 = |e: usize| 1u64.checked_shl(e as u32).filter(|_| e < 64);
    let all = pow2(n_tot - 1).ok_or(TopologyError::CountOverflow(n_tot))?;
    let bad = pow2(n_inj).ok_or(TopologyError::CountOverflow(n_tot))?;
    // n_line >= 1 implies all >= bad, so this cannot underflow.
    Ok(all - bad + 1)
}

/// Target bus of every element attached to one substation.
///
/// `buses` follows [`Substation::elements`] order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubstationAction {
    pub substation: usize,
    pub buses: Vec<Bus>,
}

impl SubstationAction {
    /// Everything back on bus 1.
    pub fn all_bus_one(sub: &Substation) -> Self {
        SubstationAction { substation: sub.id, buses: vec![Bus::One; sub.n_elements()] }
    }

    pub fn check_shape(&self, grid: &Grid) -> Result<(), TopologyError> {
        if self.substation >= grid.n_substations() {
            return Err(TopologyError::UnknownSubstation(self.substation));
        }
        let expected = grid.substation(self.substation).n_elements();
        if self.buses.len() != expected {
            return Err(TopologyError::AssignmentLength {
                substation: self.substation,
                got: self.buses.len(),
                expected,
            });
        }
        if self.buses.iter().any(|b| !b.is_connected()) {
            return Err(TopologyError::DisconnectedAssignment);
        }
        Ok(())
    }

    /// Every bus that hosts a generator or load also hosts a line.
    pub fn is_valid(&self, sub: &Substation) -> bool {
        is_valid_assignment(&sub.elements(), &self.buses)
    }

    /// Lowest canonical element on bus 1.
    pub fn is_canonical(&self) -> bool {
        self.buses.first().is_none_or(|&b| b == Bus::One)
    }

    pub fn is_all_bus_one(&self) -> bool {
        self.buses.iter().all(|&b| b == Bus::One)
    }

    /// Applies the assignment to connected elements; disconnected line ends
    /// stay disconnected.
    pub fn apply(&self, grid: &Grid, topo: &TopologyVector) -> TopologyVector {
        let mut out = topo.clone();
        for (&e, &bus) in grid.substation(self.substation).elements().iter().zip(&self.buses) {
            let pos = grid.position(e);
            if out.get(pos).is_connected() {
                out.set(pos, bus);
            }
        }
        out
    }

    /// Whether applying this action to `topo` changes nothing.
    pub fn is_noop_on(&self, grid: &Grid, topo: &TopologyVector) -> bool {
        grid.substation(self.substation)
            .elements()
            .iter()
            .zip(&self.buses)
            .all(|(&e, &b)| {
                let cur = topo.bus_of(grid, e);
                !cur.is_connected() || cur == b
            })
    }

    pub fn n_on_bus_two(&self) -> usize {
        self.buses.iter().filter(|&&b| b == Bus::Two).count()
    }
}

fn is_valid_assignment(elements: &[Element], buses: &[Bus]) -> bool {
    [Bus::One, Bus::Two].iter().all(|&bus| {
        let mut has_line = false;
        let mut has_injection = false;
        for (e, &b) in elements.iter().zip(buses) {
            if b == bus {
                has_line |= e.is_line();
                has_injection |= e.is_injection();
            }
        }
        has_line || !has_injection
    })
}

/// All valid, canonical configurations of `sub`, in ascending bit order
/// (element `i` on bus 2 iff bit `i` set). The all-bus-1 configuration
/// comes first.
pub fn enumerate_valid_topologies(sub: &Substation) -> Result<Vec<SubstationAction>, TopologyError> {
    let n = sub.n_elements();
    if n > MAX_ENUMERATED_ELEMENTS {
        return Err(TopologyError::TooManyElements {
            substation: sub.id,
            count: n,
            limit: MAX_ENUMERATED_ELEMENTS,
        });
    }
    if sub.n_lines() == 0 {
        return Err(TopologyError::NoLines);
    }
    let elements = sub.elements();
    let mut out = Vec::new();
    // Bit 0 is pinned to bus 1 (canonical form), so iterate over even masks.
    for mask in (0u32..(1u32 << n)).step_by(2) {
        let buses: Vec<Bus> =
            (0..n).map(|i| if mask >> i & 1 == 1 { Bus::Two } else { Bus::One }).collect();
        if is_valid_assignment(&elements, &buses) {
            out.push(SubstationAction { substation: sub.id, buses });
        }
    }
    Ok(out)
}
