//! Bundled test grids and chronic suites.
//!
//! * [`fig1`]: four substations, five lines, fourteen element positions;
//!   one line overloads at the nominal injections and a single bus split
//!   at substation 2 relieves it.
//! * [`training`]: five substations, the grid the learner is trained on.
//! * [`evaluation`]: fourteen substations for larger runs.
//!
//! Quantities are per unit on a 100 MVA base.

use crate::grid::{GeneratorSpec, Grid, LineSpec, LoadSpec};
use crate::scenario::{generate_chronic, Chronic, ChronicProfile, MaintenanceEvent, OpponentSchedule};
use crate::derive_seed;
use chrono::{NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A grid with the data needed to synthesize chronics for it.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub grid: Grid,
    /// Daily-average consumption per load.
    pub nominal_load: Vec<f64>,
    pub renewables: Vec<usize>,
    /// Lines the opponent may attack.
    pub attack_targets: Vec<usize>,
}

fn line(id: usize, origin: usize, extremity: usize, reactance: f64, thermal_limit: f64) -> LineSpec {
    LineSpec { id, origin, extremity, reactance, thermal_limit }
}

fn gen(id: usize, substation: usize, p_max: f64) -> GeneratorSpec {
    GeneratorSpec { id, substation, p_max }
}

fn load(id: usize, substation: usize) -> LoadSpec {
    LoadSpec { id, substation }
}

pub fn fig1() -> Fixture {
    let lines = vec![
        line(0, 0, 1, 0.1, 1.2),
        line(1, 0, 2, 0.1, 1.2),
        line(2, 1, 3, 0.1, 0.6),
        line(3, 2, 3, 0.1, 0.2),
        line(4, 1, 2, 0.1, 1.2),
    ];
    let grid = Grid::new("fig1", 4, lines, vec![gen(0, 0, 3.0), gen(1, 3, 1.0)], vec![load(0, 1), load(1, 2)])
        .expect("fig1 fixture is valid")
        .with_layout(vec![(0.0, 1.0), (1.0, 2.0), (1.0, 0.0), (2.0, 1.0)]);
    Fixture { grid, nominal_load: vec![1.0, 1.0], renewables: vec![], attack_targets: vec![] }
}

pub fn training() -> Fixture {
    let lines = vec![
        line(0, 0, 1, 0.076, 1.30),
        line(1, 0, 2, 0.149, 0.95),
        line(2, 0, 3, 0.093, 1.26),
        line(3, 1, 2, 0.182, 0.23),
        line(4, 1, 3, 0.191, 0.24),
        line(5, 2, 3, 0.067, 0.34),
        line(6, 2, 4, 0.192, 0.34),
        line(7, 3, 4, 0.186, 0.32),
        line(8, 1, 4, 0.071, 0.50),
    ];
    let gens = vec![gen(0, 0, 3.0), gen(1, 4, 1.5)];
    let loads = vec![load(0, 1), load(1, 2), load(2, 3), load(3, 4)];
    let grid = Grid::new("training5", 5, lines, gens, loads)
        .expect("training fixture is valid")
        .with_layout(vec![(0.0, 1.0), (1.0, 2.0), (1.0, 0.0), (2.0, 1.0), (3.0, 1.0)]);
    Fixture {
        grid,
        nominal_load: vec![0.45, 0.5, 0.55, 0.4],
        renewables: vec![1],
        attack_targets: vec![0, 1, 2, 3, 5, 6, 7, 8],
    }
}

/// Fourteen-bus meshed network (IEEE 14-bus line reactances).
pub fn evaluation() -> Fixture {
    let branches: [(usize, usize, f64); 20] = [
        (0, 1, 0.05917),
        (0, 4, 0.22304),
        (1, 2, 0.19797),
        (1, 3, 0.17632),
        (1, 4, 0.17388),
        (2, 3, 0.17103),
        (3, 4, 0.04211),
        (3, 6, 0.20912),
        (3, 8, 0.55618),
        (4, 5, 0.25202),
        (5, 10, 0.19890),
        (5, 11, 0.25581),
        (5, 12, 0.13027),
        (6, 7, 0.17615),
        (6, 8, 0.11001),
        (8, 9, 0.08450),
        (8, 13, 0.27038),
        (9, 10, 0.19207),
        (11, 12, 0.19988),
        (12, 13, 0.34802),
    ];
    let limits = [1.8, 0.9, 0.9, 0.7, 0.6, 0.4, 0.8, 0.4, 0.3, 0.6, 0.2, 0.2, 0.3, 0.3, 0.4, 0.1, 0.2, 0.1, 0.1, 0.1];
    let lines = branches.iter().zip(limits).enumerate().map(|(i, (&(o, e, x), lim))| line(i, o, e, x, lim)).collect();
    let gens = vec![gen(0, 0, 3.3), gen(1, 1, 1.4), gen(2, 2, 1.0), gen(3, 5, 1.0), gen(4, 7, 1.0)];
    let load_subs = [1, 2, 3, 4, 5, 8, 9, 10, 11, 12, 13];
    let loads = load_subs.iter().enumerate().map(|(i, &s)| load(i, s)).collect();
    let grid = Grid::new("eval14", 14, lines, gens, loads).expect("evaluation fixture is valid");
    Fixture {
        grid,
        nominal_load: vec![0.217, 0.942, 0.478, 0.076, 0.112, 0.295, 0.09, 0.035, 0.061, 0.135, 0.149],
        renewables: vec![3, 4],
        attack_targets: vec![0, 2, 3, 6, 7, 14],
    }
}

pub fn fig1_grid() -> Grid {
    fig1().grid
}

pub fn training_grid() -> Grid {
    training().grid
}

pub fn evaluation_grid() -> Grid {
    evaluation().grid
}

/// Midnight, 6 January 2024, plus `days`.
pub fn suite_start(days: u64) -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2024, 1, 6).unwrap().and_hms_opt(0, 0, 0).unwrap() + chrono::Duration::days(days as i64)
}

/// Flat chronic at the given fraction of nominal load, no events.
pub fn flat_chronic(fx: &Fixture, level: f64, steps: usize) -> Chronic {
    let base = fx.nominal_load.iter().map(|x| x * level).collect();
    generate_chronic(&fx.grid, &ChronicProfile::flat("flat", suite_start(0), base), steps, 0)
}

/// Light, attack-free chronic: every agent survives it.
pub fn easy_chronic(fx: &Fixture, steps: usize) -> Chronic {
    let mut c = flat_chronic(fx, 0.5, steps);
    c.id = "easy".into();
    c
}

/// Daily load cycles with renewables, one maintenance event and an
/// opponent. Deterministic in `seed`.
pub fn adversarial_suite(fx: &Fixture, n: usize, steps: usize, seed: u64) -> Vec<Chronic> {
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xAD5E, i as u64));
            let level = rng.random_range(0.95..1.05);
            let mut p = ChronicProfile::flat(
                format!("adv-{i:02}"),
                suite_start(i as u64),
                fx.nominal_load.iter().map(|x| x * level).collect(),
            );
            p.amplitude = rng.random_range(0.15..0.25);
            p.peak_hour = rng.random_range(16.0..20.0);
            p.noise = 0.02;
            p.renewable_generators = fx.renewables.clone();
            p.renewable_capacity_factor = 0.4;
            p.renewable_variability = 0.15;
            if !fx.attack_targets.is_empty() && steps > 48 {
                let line = fx.attack_targets[rng.random_range(0..fx.attack_targets.len())];
                let start = rng.random_range(12..steps / 2);
                p.maintenance = vec![MaintenanceEvent { line, start, duration: 24.min(steps - start) }];
            }
            p.opponent = OpponentSchedule {
                targets: fx.attack_targets.clone(),
                probability: 0.02,
                budget: None,
                duration: 24,
                cooldown: 24,
            };
            generate_chronic(&fx.grid, &p, steps, derive_seed(seed, 0xC4C4, i as u64))
        })
        .collect()
}
