use super::{Chronic, MaintenanceEvent, OpponentSchedule};
use crate::grid::Grid;
use chrono::{Duration, NaiveDateTime, Timelike};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// AR(1) coefficient of the weather factor (per 5-minute step).
const WEATHER_PERSISTENCE: f64 = 0.98;

/// Shape of a synthetic chronic.
///
/// Each load follows `base · (1 + amplitude · cos(2π (h − peak_hour) / 24))`
/// times `(1 + noise · ε)` with `ε ~ N(0, 1)`, so the noiseless daily
/// peak-to-trough ratio is `(1 + amplitude) / (1 − amplitude)`.
/// Renewable generators produce `p_max · w(t)` where the weather factor
/// `w` is an AR(1) process around `renewable_capacity_factor`; conventional
/// generators cover the rest in proportion to `p_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChronicProfile {
    pub id: String,
    pub start: NaiveDateTime,
    pub load_base: Vec<f64>,
    pub amplitude: f64,
    pub peak_hour: f64,
    pub noise: f64,
    pub renewable_generators: Vec<usize>,
    pub renewable_capacity_factor: f64,
    pub renewable_variability: f64,
    pub maintenance: Vec<MaintenanceEvent>,
    pub opponent: OpponentSchedule,
}

impl ChronicProfile {
    /// Constant loads at `load_base`, no renewables, no events.
    pub fn flat(id: impl Into<String>, start: NaiveDateTime, load_base: Vec<f64>) -> Self {
        ChronicProfile {
            id: id.into(),
            start,
            load_base,
            amplitude: 0.0,
            peak_hour: 18.0,
            noise: 0.0,
            renewable_generators: vec![],
            renewable_capacity_factor: 0.0,
            renewable_variability: 0.0,
            maintenance: vec![],
            opponent: OpponentSchedule::none(),
        }
    }
}

/// Deterministic synthetic chronic for `grid`.
pub fn generate_chronic(grid: &Grid, profile: &ChronicProfile, steps: usize, seed: u64) -> Chronic {
    assert!(steps >= 1, "a chronic needs at least one step");
    assert_eq!(profile.load_base.len(), grid.n_loads(), "one base value per load");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gens = grid.generators();
    let is_renewable: Vec<bool> = (0..gens.len()).map(|g| profile.renewable_generators.contains(&g)).collect();
    let conventional_cap: f64 = gens.iter().filter(|g| !is_renewable[g.id]).map(|g| g.p_max).sum();

    let mut weather = 0.0f64;
    let innovation = (1.0 - WEATHER_PERSISTENCE * WEATHER_PERSISTENCE).sqrt();
    let mut gen_p = Vec::with_capacity(steps);
    let mut load_p = Vec::with_capacity(steps);
    for t in 0..steps {
        let stamp = profile.start + Duration::minutes(5 * t as i64);
        let hour = f64::from(stamp.hour()) + f64::from(stamp.minute()) / 60.0;
        let daily = 1.0 + profile.amplitude * (2.0 * PI * (hour - profile.peak_hour) / 24.0).cos();
        let loads: Vec<f64> = profile
            .load_base
            .iter()
            .map(|&base| {
                let eps: f64 = if profile.noise > 0.0 { StandardNormal.sample(&mut rng) } else { 0.0 };
                (base * daily * (1.0 + profile.noise * eps)).max(0.0)
            })
            .collect();
        let total: f64 = loads.iter().sum();

        if profile.renewable_variability > 0.0 {
            let eps: f64 = StandardNormal.sample(&mut rng);
            weather = WEATHER_PERSISTENCE * weather + innovation * eps;
        }
        let factor = (profile.renewable_capacity_factor + profile.renewable_variability * weather).clamp(0.0, 1.0);
        let mut p: Vec<f64> = gens.iter().map(|g| if is_renewable[g.id] { g.p_max * factor } else { 0.0 }).collect();
        let renewable: f64 = p.iter().sum();
        if conventional_cap > 0.0 {
            let scale = if renewable > total { total / renewable } else { 1.0 };
            p.iter_mut().for_each(|x| *x *= scale);
            let rest = (total - renewable.min(total)).max(0.0);
            for g in gens.iter().filter(|g| !is_renewable[g.id]) {
                p[g.id] = rest * g.p_max / conventional_cap;
            }
        } else if renewable > 0.0 {
            let scale = total / renewable;
            p.iter_mut().for_each(|x| *x *= scale);
        }
        gen_p.push(p);
        load_p.push(loads);
    }
    Chronic {
        id: profile.id.clone(),
        start: profile.start,
        gen_p,
        load_p,
        maintenance: profile.maintenance.clone(),
        opponent: profile.opponent.clone(),
    }
}
