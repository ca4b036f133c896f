//! Flattening of an [`Observation`] into the network input.
//!
//! Layout version 1, in order:
//!
//! | block | length | encoding |
//! |---|---|---|
//! | time | 5 | month/12, day/31, hour/24, minute/60, day_of_week/7 |
//! | generators | 3G | p, q, v |
//! | loads | 3D | p, q, v |
//! | lines | 8L | p_or, p_ex, q_or, q_ex, v_or, v_ex, a_or, a_ex |
//! | line status | L | 1 connected, 0 out |
//! | ρ | L | as is |
//! | topology | 2L+G+D | bus 1 → 1, bus 2 → 2, disconnected → −1 |
//! | overflow time | L | steps / 288 |
//! | line cooldown | L | steps / 288 |
//! | substation cooldown | S | steps / 288 |
//! | next maintenance | L | steps / 288 |
//! | maintenance duration | L | steps / 288 |
//!
//! Total: `5 + 4G + 4D + 16L + S`.

use crate::environment::Observation;
use crate::grid::{Bus, Grid};

pub const FEATURE_LAYOUT_VERSION: u32 = 1;

/// Divisor for every step-count feature (one day of 5-minute steps).
pub const TIMER_HORIZON: f64 = 288.0;

pub fn feature_len(grid: &Grid) -> usize {
    let (g, d, l, s) = (grid.n_generators(), grid.n_loads(), grid.n_lines(), grid.n_substations());
    5 + 4 * g + 4 * d + 16 * l + s
}

pub fn featurize(obs: &Observation) -> Vec<f64> {
    let mut v = Vec::with_capacity(5 + obs.gen_p.len() * 4 + obs.load_p.len() * 4 + obs.rho.len() * 16 + obs.substation_cooldown.len());
    let t = &obs.time;
    v.extend([
        f64::from(t.month) / 12.0,
        f64::from(t.day) / 31.0,
        f64::from(t.hour) / 24.0,
        f64::from(t.minute) / 60.0,
        f64::from(t.day_of_week) / 7.0,
    ]);
    for block in [&obs.gen_p, &obs.gen_q, &obs.gen_v, &obs.load_p, &obs.load_q, &obs.load_v] {
        v.extend_from_slice(block);
    }
    for block in [&obs.p_or, &obs.p_ex, &obs.q_or, &obs.q_ex, &obs.v_or, &obs.v_ex, &obs.a_or, &obs.a_ex] {
        v.extend_from_slice(block);
    }
    v.extend(obs.line_status.iter().map(|&c| if c { 1.0 } else { 0.0 }));
    v.extend_from_slice(&obs.rho);
    v.extend(obs.topo_vect.buses().iter().map(|b| match b {
        Bus::One => 1.0,
        Bus::Two => 2.0,
        Bus::Disconnected => -1.0,
    }));
    for timers in [&obs.time_overflow, &obs.line_cooldown, &obs.substation_cooldown, &obs.time_next_maintenance, &obs.maintenance_duration] {
        v.extend(timers.iter().map(|&x| f64::from(x) / TIMER_HORIZON));
    }
    v
}
