//! Topology control of power networks: a DC power-flow grid simulator and
//! a controller that gates a PPO policy behind simple safety heuristics.
//!
//! * [`grid`]: substations, busbars, topology vectors, bridges
//! * [`power_flow`]: DC load flow
//! * [`topology`]: substation configurations and the reduced action set
//! * [`environment`]: the step/reset episode simulator
//! * [`controller`]: threshold-gated decision making
//! * [`ppo`]: the learner
//! * [`scenario`]: chronics and file formats
//! * [`evaluation`], [`analysis`]: benchmark runs and action statistics
//! * [`fixtures`]: the bundled grids and chronic suites

pub mod analysis;
pub mod controller;
pub mod environment;
pub mod evaluation;
pub mod fixtures;
pub mod grid;
pub mod power_flow;
pub mod ppo;
pub mod scenario;
pub mod topology;

/// Deterministic child seed for stream `tag`, index `i` (splitmix64 mix).
pub fn derive_seed(seed: u64, tag: u64, i: u64) -> u64 {
    let mut z = seed ^ tag.rotate_left(32) ^ i.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
