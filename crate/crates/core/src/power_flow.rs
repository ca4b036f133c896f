//! Linearized (DC) power flow.
//!
//! Solves `B·θ = P` on the connected component of the electrical graph that
//! contains the slack node, with the slack angle pinned to zero. Generation
//! is balanced against load before solving by spreading the mismatch over
//! all generators in proportion to their `p_max`.

use crate::grid::{Bus, Element, Grid, TopologyVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PowerFlowError {
    #[error("electrical node {node:?} hosts injections but is not reachable from the slack")]
    IslandedGrid { node: (usize, Bus) },
    #[error("reduced susceptance matrix is singular")]
    SingularMatrix,
    #[error("load {load:.6} exceeds total generator capacity {capacity:.6}")]
    SlackInfeasible { load: f64, capacity: f64 },
    #[error("injection profile has {got} {class} entries, grid has {expected}")]
    ProfileShape { class: &'static str, got: usize, expected: usize },
    #[error("load {0} has negative consumption")]
    NegativeLoad(usize),
}

/// Active power set-points for one time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionProfile {
    pub p_gen: Vec<f64>,
    pub p_load: Vec<f64>,
}

impl InjectionProfile {
    pub fn zeros(grid: &Grid) -> Self {
        InjectionProfile { p_gen: vec![0.0; grid.n_generators()], p_load: vec![0.0; grid.n_loads()] }
    }

    /// Linear combination `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &InjectionProfile, b: f64) -> InjectionProfile {
        InjectionProfile {
            p_gen: self.p_gen.iter().zip(&other.p_gen).map(|(x, y)| a * x + b * y).collect(),
            p_load: self.p_load.iter().zip(&other.p_load).map(|(x, y)| a * x + b * y).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSolution {
    /// Electrical node labels, aligned with `theta`.
    pub nodes: Vec<(usize, Bus)>,
    /// Voltage angle per electrical node, radians.
    pub theta: Vec<f64>,
    /// Signed active flow per line, origin to extremity positive.
    pub p_flow: Vec<f64>,
    /// `|p_flow| / thermal_limit`, zero for disconnected lines.
    pub rho: Vec<f64>,
    /// Generator output after slack distribution.
    pub p_gen: Vec<f64>,
    pub slack_node: usize,
}

impl FlowSolution {
    pub fn rho_max(&self) -> f64 {
        rho_max(&self.rho)
    }
}

/// Maximum loading ratio; zero when nothing is connected.
pub fn rho_max(rho: &[f64]) -> f64 {
    rho.iter().copied().fold(0.0, f64::max)
}

/// Slack-balanced generation: mismatch spread proportionally to `p_max`.
pub fn balance_generation(grid: &Grid, inj: &InjectionProfile) -> Result<Vec<f64>, PowerFlowError> {
    let total_load: f64 = inj.p_load.iter().sum();
    let total_gen: f64 = inj.p_gen.iter().sum();
    let capacity: f64 = grid.generators().iter().map(|g| g.p_max).sum();
    if total_load > capacity + 1e-9 {
        return Err(PowerFlowError::SlackInfeasible { load: total_load, capacity });
    }
    let mismatch = total_load - total_gen;
    if capacity <= 0.0 {
        if mismatch.abs() > 1e-12 {
            return Err(PowerFlowError::SlackInfeasible { load: total_load, capacity });
        }
        return Ok(inj.p_gen.clone());
    }
    Ok(grid
        .generators()
        .iter()
        .zip(&inj.p_gen)
        .map(|(g, &p)| p + mismatch * g.p_max / capacity)
        .collect())
}

/// Solves the DC power flow for `topo` and `inj`.
pub fn solve_dc(
    grid: &Grid,
    topo: &TopologyVector,
    inj: &InjectionProfile,
) -> Result<FlowSolution, PowerFlowError> {
    if inj.p_gen.len() != grid.n_generators() {
        return Err(PowerFlowError::ProfileShape {
            class: "generator",
            got: inj.p_gen.len(),
            expected: grid.n_generators(),
        });
    }
    if inj.p_load.len() != grid.n_loads() {
        return Err(PowerFlowError::ProfileShape {
            class: "load",
            got: inj.p_load.len(),
            expected: grid.n_loads(),
        });
    }
    if let Some(d) = inj.p_load.iter().position(|&p| p < 0.0) {
        return Err(PowerFlowError::NegativeLoad(d));
    }
    let p_gen = balance_generation(grid, inj)?;
    let graph = grid.electrical_graph(topo);
    let n = graph.n_nodes();

    let mut injection = vec![0.0; n];
    let mut hosts_injection = vec![false; n];
    for (g, &p) in p_gen.iter().enumerate() {
        let node = graph.node_of_position[grid.position(Element::Generator(g))]
            .expect("generators are always connected");
        injection[node] += p;
        hosts_injection[node] = true;
    }
    for (d, &p) in inj.p_load.iter().enumerate() {
        let node = graph.node_of_position[grid.position(Element::Load(d))]
            .expect("loads are always connected");
        injection[node] -= p;
        hosts_injection[node] = true;
    }

    // Slack: node of the largest generator (lowest id on ties).
    let slack_node = grid
        .generators()
        .iter()
        .fold(None::<(usize, f64)>, |best, g| match best {
            Some((_, p)) if p >= g.p_max => best,
            _ => Some((g.id, g.p_max)),
        })
        .map(|(g, _)| graph.node_of_position[grid.position(Element::Generator(g))].unwrap())
        .unwrap_or(0);

    let labels = graph.component_labels();
    let slack_label = labels.get(slack_node).copied();
    for v in 0..n {
        if hosts_injection[v] && Some(labels[v]) != slack_label {
            return Err(PowerFlowError::IslandedGrid { node: graph.nodes[v] });
        }
    }

    // Reduced index for every non-slack node in the slack component.
    let mut reduced = vec![usize::MAX; n];
    let mut m = 0;
    for v in 0..n {
        if v != slack_node && Some(labels[v]) == slack_label {
            reduced[v] = m;
            m += 1;
        }
    }
    let mut b = vec![0.0; m * m];
    for &(l, o, e) in &graph.edges {
        let y = grid.line(l).susceptance();
        let (ro, re) = (reduced[o], reduced[e]);
        if ro != usize::MAX {
            b[ro * m + ro] += y;
        }
        if re != usize::MAX {
            b[re * m + re] += y;
        }
        if ro != usize::MAX && re != usize::MAX {
            b[ro * m + re] -= y;
            b[re * m + ro] -= y;
        }
    }
    let mut rhs = vec![0.0; m];
    for v in 0..n {
        if reduced[v] != usize::MAX {
            rhs[reduced[v]] = injection[v];
        }
    }
    let x = cholesky_solve(&mut b, m, rhs).ok_or(PowerFlowError::SingularMatrix)?;

    let mut theta = vec![0.0; n];
    for v in 0..n {
        if reduced[v] != usize::MAX {
            theta[v] = x[reduced[v]];
        }
    }
    let mut p_flow = vec![0.0; grid.n_lines()];
    let mut rho = vec![0.0; grid.n_lines()];
    for &(l, o, e) in &graph.edges {
        let spec = grid.line(l);
        let f = spec.susceptance() * (theta[o] - theta[e]);
        p_flow[l] = f;
        rho[l] = f.abs() / spec.thermal_limit;
    }
    Ok(FlowSolution { nodes: graph.nodes, theta, p_flow, rho, p_gen, slack_node })
}

/// In-place dense Cholesky factorization and solve for a symmetric
/// positive-definite `m×m` row-major matrix. `None` on a non-positive pivot.
fn cholesky_solve(a: &mut [f64], m: usize, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let scale = (0..m).map(|i| a[i * m + i].abs()).fold(0.0, f64::max).max(1.0);
    for j in 0..m {
        let mut d = a[j * m + j];
        for k in 0..j {
            d -= a[j * m + k] * a[j * m + k];
        }
        if d <= 1e-12 * scale {
            return None;
        }
        let d = d.sqrt();
        a[j * m + j] = d;
        for i in j + 1..m {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= a[i * m + k] * a[j * m + k];
            }
            a[i * m + j] = s / d;
        }
    }
    // L·y = rhs
    for i in 0..m {
        let mut s = rhs[i];
        for k in 0..i {
            s -= a[i * m + k] * rhs[k];
        }
        rhs[i] = s / a[i * m + i];
    }
    // Lᵀ·x = y
    for i in (0..m).rev() {
        let mut s = rhs[i];
        for k in i + 1..m {
            s -= a[k * m + i] * rhs[k];
        }
        rhs[i] = s / a[i * m + i];
    }
    Some(rhs)
}
