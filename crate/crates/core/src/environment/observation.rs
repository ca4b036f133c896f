use super::Environment;
use crate::grid::TopologyVector;
use chrono::{Datelike, Duration, Timelike};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimeFeatures {
    pub month: u32,
    pub day: u32,
    pub hour: u32,
    pub minute: u32,
    /// Monday = 0.
    pub day_of_week: u32,
}

/// Full agent-visible state after a step.
///
/// Reactive power and voltage channels are zero under the DC model; the
/// current channels `a_or`/`a_ex` carry `|p_flow|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Chronic row this observation describes.
    pub step: usize,
    pub time: TimeFeatures,
    pub gen_p: Vec<f64>,
    pub gen_q: Vec<f64>,
    pub gen_v: Vec<f64>,
    pub load_p: Vec<f64>,
    pub load_q: Vec<f64>,
    pub load_v: Vec<f64>,
    pub p_or: Vec<f64>,
    pub p_ex: Vec<f64>,
    pub q_or: Vec<f64>,
    pub q_ex: Vec<f64>,
    pub v_or: Vec<f64>,
    pub v_ex: Vec<f64>,
    pub a_or: Vec<f64>,
    pub a_ex: Vec<f64>,
    pub line_status: Vec<bool>,
    pub rho: Vec<f64>,
    pub topo_vect: TopologyVector,
    pub time_overflow: Vec<u32>,
    pub line_cooldown: Vec<u32>,
    pub substation_cooldown: Vec<u32>,
    /// Steps until the next maintenance starts; 0 while one is running or
    /// when none is planned.
    pub time_next_maintenance: Vec<u32>,
    /// Remaining steps of the running maintenance, else duration of the next
    /// planned one, else 0.
    pub maintenance_duration: Vec<u32>,
}

impl Observation {
    pub(super) fn build(env: &Environment) -> Observation {
        let grid = &env.grid;
        let nl = grid.n_lines();
        let ng = grid.n_generators();
        let nd = grid.n_loads();
        let stamp = env.chronic.start + Duration::minutes(i64::from(env.cfg.timestep_minutes) * env.t as i64);
        let time = TimeFeatures {
            month: stamp.month(),
            day: stamp.day(),
            hour: stamp.hour(),
            minute: stamp.minute(),
            day_of_week: stamp.weekday().num_days_from_monday(),
        };
        let inj = env.chronic.injection(env.t);
        let line_status: Vec<bool> = (0..nl).map(|l| env.topo.line_connected(grid, l)).collect();
        let (gen_p, p_flow, rho) = match &env.solution {
            Some(sol) => (sol.p_gen.clone(), sol.p_flow.clone(), sol.rho.clone()),
            None => (inj.p_gen.clone(), vec![0.0; nl], vec![0.0; nl]),
        };
        let (mut t_nm, mut t_d) = (vec![0; nl], vec![0; nl]);
        for l in 0..nl {
            let (a, b) = env.chronic.maintenance_timers(l, env.t);
            t_nm[l] = a;
            t_d[l] = b;
        }
        let amps: Vec<f64> = p_flow.iter().map(|f| f.abs()).collect();
        Observation {
            step: env.t,
            time,
            gen_p,
            gen_q: vec![0.0; ng],
            gen_v: vec![0.0; ng],
            load_p: inj.p_load,
            load_q: vec![0.0; nd],
            load_v: vec![0.0; nd],
            p_ex: p_flow.iter().map(|f| -f).collect(),
            p_or: p_flow,
            q_or: vec![0.0; nl],
            q_ex: vec![0.0; nl],
            v_or: vec![0.0; nl],
            v_ex: vec![0.0; nl],
            a_or: amps.clone(),
            a_ex: amps,
            line_status,
            rho,
            topo_vect: env.topo.clone(),
            time_overflow: env.time_overflow.clone(),
            line_cooldown: env.line_cooldown.clone(),
            substation_cooldown: env.sub_cooldown.clone(),
            time_next_maintenance: t_nm,
            maintenance_duration: t_d,
        }
    }

    pub fn rho_max(&self) -> f64 {
        crate::power_flow::rho_max(&self.rho)
    }

    /// A maintenance window covers the current row.
    pub fn in_maintenance(&self, line: usize) -> bool {
        self.time_next_maintenance[line] == 0 && self.maintenance_duration[line] > 0
    }
}
