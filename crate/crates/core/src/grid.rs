//! Static network description and bus-level topology.
//!
//! A [`Grid`] is a set of double-busbar substations joined by lines, with
//! generators and loads attached to exactly one substation each. The
//! per-element bus assignment lives in a [`TopologyVector`], whose positions
//! follow one fixed canonical ordering:
//!
//! ```text
//! [line origins (by line id) | line extremities | generators | loads]
//! ```
//!
//! The electrical graph induced by a topology has one node per
//! `(substation, bus)` pair that hosts at least one element, so a bus split
//! turns one substation into two electrical nodes.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Errors raised while building or querying a grid.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("line {line}: substation {substation} does not exist")]
    UnknownLineEndpoint { line: usize, substation: usize },
    #[error("line {0} is a self-loop")]
    SelfLoop(usize),
    #[error("line {line}: {field} must be > 0 (got {value})")]
    NonPositiveLineParameter { line: usize, field: &'static str, value: f64 },
    #[error("generator {gen}: substation {substation} does not exist")]
    UnknownGeneratorSubstation { gen: usize, substation: usize },
    #[error("generator {0}: p_max must be >= 0")]
    NegativePmax(usize),
    #[error("load {load}: substation {substation} does not exist")]
    UnknownLoadSubstation { load: usize, substation: usize },
    #[error("{class} ids must be dense 0..N-1 in order (position {position} has id {id})")]
    NonDenseIds { class: &'static str, position: usize, id: usize },
    #[error("grid is not connected with every element on bus 1")]
    Disconnected,
    #[error("grid must have at least one substation")]
    Empty,
    #[error("unknown line id {0}")]
    UnknownLine(usize),
    #[error("line {0} is not connected")]
    LineNotConnected(usize),
    #[error("topology vector has length {got}, expected {expected}")]
    TopologyLength { got: usize, expected: usize },
    #[error("{0} is disconnected; only lines may be disconnected")]
    InjectionDisconnected(String),
    #[error("line {0} has exactly one end disconnected")]
    HalfDisconnectedLine(usize),
}

/// Busbar assignment of one element position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bus {
    One,
    Two,
    Disconnected,
}

impl Bus {
    /// Numeric code used in feature vectors and files: 1, 2 or -1.
    pub fn code(self) -> i8 {
        match self {
            Bus::One => 1,
            Bus::Two => 2,
            Bus::Disconnected => -1,
        }
    }

    pub fn from_code(code: i64) -> Option<Bus> {
        match code {
            1 => Some(Bus::One),
            2 => Some(Bus::Two),
            -1 => Some(Bus::Disconnected),
            _ => None,
        }
    }

    pub fn is_connected(self) -> bool {
        self != Bus::Disconnected
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSpec {
    pub id: usize,
    pub origin: usize,
    pub extremity: usize,
    /// Series reactance, per-unit.
    pub reactance: f64,
    /// Thermal limit, per-unit.
    pub thermal_limit: f64,
}

impl LineSpec {
    pub fn susceptance(&self) -> f64 {
        1.0 / self.reactance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub id: usize,
    pub substation: usize,
    pub p_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSpec {
    pub id: usize,
    pub substation: usize,
}

/// One element position of the topology vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Element {
    LineOrigin(usize),
    LineExtremity(usize),
    Generator(usize),
    Load(usize),
}

impl Element {
    pub fn is_line(self) -> bool {
        matches!(self, Element::LineOrigin(_) | Element::LineExtremity(_))
    }

    pub fn is_injection(self) -> bool {
        !self.is_line()
    }
}

impl std::fmt::Display for Element {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Element::LineOrigin(l) => write!(f, "line {l} (origin)"),
            Element::LineExtremity(l) => write!(f, "line {l} (extremity)"),
            Element::Generator(g) => write!(f, "generator {g}"),
            Element::Load(d) => write!(f, "load {d}"),
        }
    }
}

/// A double-busbar substation and the elements attached to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Substation {
    pub id: usize,
    pub lines_origin: Vec<usize>,
    pub lines_extremity: Vec<usize>,
    pub generators: Vec<usize>,
    pub loads: Vec<usize>,
}

impl Substation {
    pub const BUS_COUNT: usize = 2;

    pub fn n_lines(&self) -> usize {
        self.lines_origin.len() + self.lines_extremity.len()
    }

    pub fn n_injections(&self) -> usize {
        self.generators.len() + self.loads.len()
    }

    pub fn n_elements(&self) -> usize {
        self.n_lines() + self.n_injections()
    }

    /// Attached elements in canonical order.
    pub fn elements(&self) -> Vec<Element> {
        let mut out = Vec::with_capacity(self.n_elements());
        out.extend(self.lines_origin.iter().map(|&l| Element::LineOrigin(l)));
        out.extend(self.lines_extremity.iter().map(|&l| Element::LineExtremity(l)));
        out.extend(self.generators.iter().map(|&g| Element::Generator(g)));
        out.extend(self.loads.iter().map(|&d| Element::Load(d)));
        out
    }
}

/// Optional drawing coordinates, one per substation.
pub type Layout = Vec<(f64, f64)>;

/// Immutable power network description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub name: String,
    substations: Vec<Substation>,
    lines: Vec<LineSpec>,
    generators: Vec<GeneratorSpec>,
    loads: Vec<LoadSpec>,
    layout: Option<Layout>,
}

impl Grid {
    /// Validates the element lists and derives the substation attachments.
    pub fn new(
        name: impl Into<String>,
        n_substations: usize,
        lines: Vec<LineSpec>,
        generators: Vec<GeneratorSpec>,
        loads: Vec<LoadSpec>,
    ) -> Result<Grid, GridError> {
        if n_substations == 0 {
            return Err(GridError::Empty);
        }
        for (i, l) in lines.iter().enumerate() {
            if l.id != i {
                return Err(GridError::NonDenseIds { class: "line", position: i, id: l.id });
            }
            for s in [l.origin, l.extremity] {
                if s >= n_substations {
                    return Err(GridError::UnknownLineEndpoint { line: i, substation: s });
                }
            }
            if l.origin == l.extremity {
                return Err(GridError::SelfLoop(i));
            }
            // `!(x > 0)` also rejects NaN.
            if !(l.reactance > 0.0) {
                return Err(GridError::NonPositiveLineParameter {
                    line: i,
                    field: "reactance",
                    value: l.reactance,
                });
            }
            if !(l.thermal_limit > 0.0) {
                return Err(GridError::NonPositiveLineParameter {
                    line: i,
                    field: "thermal_limit",
                    value: l.thermal_limit,
                });
            }
        }
        for (i, g) in generators.iter().enumerate() {
            if g.id != i {
                return Err(GridError::NonDenseIds { class: "generator", position: i, id: g.id });
            }
            if g.substation >= n_substations {
                return Err(GridError::UnknownGeneratorSubstation { gen: i, substation: g.substation });
            }
            if !(g.p_max >= 0.0) {
                return Err(GridError::NegativePmax(i));
            }
        }
        for (i, d) in loads.iter().enumerate() {
            if d.id != i {
                return Err(GridError::NonDenseIds { class: "load", position: i, id: d.id });
            }
            if d.substation >= n_substations {
                return Err(GridError::UnknownLoadSubstation { load: i, substation: d.substation });
            }
        }

        let mut substations: Vec<Substation> = (0..n_substations)
            .map(|id| Substation {
                id,
                lines_origin: vec![],
                lines_extremity: vec![],
                generators: vec![],
                loads: vec![],
            })
            .collect();
        for l in &lines {
            substations[l.origin].lines_origin.push(l.id);
            substations[l.extremity].lines_extremity.push(l.id);
        }
        for g in &generators {
            substations[g.substation].generators.push(g.id);
        }
        for d in &loads {
            substations[d.substation].loads.push(d.id);
        }

        let grid = Grid { name: name.into(), substations, lines, generators, loads, layout: None };
        let reference = grid.reference_topology();
        let isolated = grid.substations.iter().any(|s| s.n_lines() == 0) && grid.substations.len() > 1;
        if isolated || grid.electrical_graph(&reference).components() != 1 {
            return Err(GridError::Disconnected);
        }
        Ok(grid)
    }

    pub fn with_layout(mut self, layout: Layout) -> Self {
        self.layout = Some(layout);
        self
    }

    pub fn layout(&self) -> Option<&Layout> {
        self.layout.as_ref()
    }

    pub fn substations(&self) -> &[Substation] {
        &self.substations
    }

    pub fn substation(&self, id: usize) -> &Substation {
        &self.substations[id]
    }

    pub fn lines(&self) -> &[LineSpec] {
        &self.lines
    }

    pub fn line(&self, id: usize) -> &LineSpec {
        &self.lines[id]
    }

    pub fn generators(&self) -> &[GeneratorSpec] {
        &self.generators
    }

    pub fn loads(&self) -> &[LoadSpec] {
        &self.loads
    }

    pub fn n_substations(&self) -> usize {
        self.substations.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn n_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn n_loads(&self) -> usize {
        self.loads.len()
    }

    /// Length of the topology vector: `2·N_line + N_gen + N_load`.
    pub fn n_positions(&self) -> usize {
        2 * self.lines.len() + self.generators.len() + self.loads.len()
    }

    pub fn position(&self, element: Element) -> usize {
        let nl = self.lines.len();
        let ng = self.generators.len();
        match element {
            Element::LineOrigin(l) => l,
            Element::LineExtremity(l) => nl + l,
            Element::Generator(g) => 2 * nl + g,
            Element::Load(d) => 2 * nl + ng + d,
        }
    }

    pub fn element_at(&self, position: usize) -> Element {
        let nl = self.lines.len();
        let ng = self.generators.len();
        if position < nl {
            Element::LineOrigin(position)
        } else if position < 2 * nl {
            Element::LineExtremity(position - nl)
        } else if position < 2 * nl + ng {
            Element::Generator(position - 2 * nl)
        } else {
            Element::Load(position - 2 * nl - ng)
        }
    }

    pub fn substation_of(&self, element: Element) -> usize {
        match element {
            Element::LineOrigin(l) => self.lines[l].origin,
            Element::LineExtremity(l) => self.lines[l].extremity,
            Element::Generator(g) => self.generators[g].substation,
            Element::Load(d) => self.loads[d].substation,
        }
    }

    /// All elements on bus 1, every line connected.
    pub fn reference_topology(&self) -> TopologyVector {
        TopologyVector(vec![Bus::One; self.n_positions()])
    }

    /// Connectivity structure induced by `topo`.
    pub fn electrical_graph(&self, topo: &TopologyVector) -> ElectricalGraph {
        ElectricalGraph::build(self, topo)
    }

    /// Whether removing `line_id` splits the electrical graph of `topo`.
    pub fn is_bridge(&self, topo: &TopologyVector, line_id: usize) -> Result<bool, GridError> {
        if line_id >= self.lines.len() {
            return Err(GridError::UnknownLine(line_id));
        }
        if !topo.line_connected(self, line_id) {
            return Err(GridError::LineNotConnected(line_id));
        }
        Ok(self.electrical_graph(topo).bridges()[line_id])
    }
}

/// Bus assignment for every element position, in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TopologyVector(pub Vec<Bus>);

impl TopologyVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn buses(&self) -> &[Bus] {
        &self.0
    }

    pub fn get(&self, position: usize) -> Bus {
        self.0[position]
    }

    pub fn set(&mut self, position: usize, bus: Bus) {
        self.0[position] = bus;
    }

    pub fn bus_of(&self, grid: &Grid, element: Element) -> Bus {
        self.0[grid.position(element)]
    }

    /// True when every position is on bus 1.
    pub fn is_reference(&self) -> bool {
        self.0.iter().all(|&b| b == Bus::One)
    }

    pub fn line_connected(&self, grid: &Grid, line: usize) -> bool {
        self.bus_of(grid, Element::LineOrigin(line)).is_connected()
    }

    pub fn disconnect_line(&mut self, grid: &Grid, line: usize) {
        self.0[grid.position(Element::LineOrigin(line))] = Bus::Disconnected;
        self.0[grid.position(Element::LineExtremity(line))] = Bus::Disconnected;
    }

    pub fn connect_line(&mut self, grid: &Grid, line: usize, origin_bus: Bus, extremity_bus: Bus) {
        self.0[grid.position(Element::LineOrigin(line))] = origin_bus;
        self.0[grid.position(Element::LineExtremity(line))] = extremity_bus;
    }

    /// Substations where some connected element sits on bus 2.
    pub fn deviated_substations(&self, grid: &Grid) -> Vec<usize> {
        grid.substations()
            .iter()
            .filter(|s| s.elements().iter().any(|&e| self.bus_of(grid, e) == Bus::Two))
            .map(|s| s.id)
            .collect()
    }

    /// Checks the structural invariants against `grid`.
    pub fn validate(&self, grid: &Grid) -> Result<(), GridError> {
        if self.0.len() != grid.n_positions() {
            return Err(GridError::TopologyLength { got: self.0.len(), expected: grid.n_positions() });
        }
        for pos in 2 * grid.n_lines()..grid.n_positions() {
            if !self.0[pos].is_connected() {
                return Err(GridError::InjectionDisconnected(grid.element_at(pos).to_string()));
            }
        }
        for l in 0..grid.n_lines() {
            let o = self.bus_of(grid, Element::LineOrigin(l)).is_connected();
            let e = self.bus_of(grid, Element::LineExtremity(l)).is_connected();
            if o != e {
                return Err(GridError::HalfDisconnectedLine(l));
            }
        }
        Ok(())
    }
}

/// Bus-level graph: nodes are `(substation, bus)` pairs hosting an element.
#[derive(Debug, Clone)]
pub struct ElectricalGraph {
    /// Node labels, sorted by `(substation, bus)`.
    pub nodes: Vec<(usize, Bus)>,
    /// Electrical node of each topology position (`None` when disconnected).
    pub node_of_position: Vec<Option<usize>>,
    /// `(line id, origin node, extremity node)` for every connected line.
    pub edges: Vec<(usize, usize, usize)>,
}

impl ElectricalGraph {
    fn build(grid: &Grid, topo: &TopologyVector) -> ElectricalGraph {
        let mut index: HashMap<(usize, Bus), usize> = HashMap::new();
        let mut labels: Vec<(usize, Bus)> = (0..topo.len())
            .filter(|&p| topo.get(p).is_connected())
            .map(|p| (grid.substation_of(grid.element_at(p)), topo.get(p)))
            .collect();
        labels.sort();
        labels.dedup();
        for (i, &label) in labels.iter().enumerate() {
            index.insert(label, i);
        }
        let node_of_position: Vec<Option<usize>> = (0..topo.len())
            .map(|p| {
                let bus = topo.get(p);
                bus.is_connected()
                    .then(|| index[&(grid.substation_of(grid.element_at(p)), bus)])
            })
            .collect();
        let edges = (0..grid.n_lines())
            .filter_map(|l| {
                let o = node_of_position[grid.position(Element::LineOrigin(l))]?;
                let e = node_of_position[grid.position(Element::LineExtremity(l))]?;
                Some((l, o, e))
            })
            .collect();
        ElectricalGraph { nodes: labels, node_of_position, edges }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Component label per node.
    pub fn component_labels(&self) -> Vec<usize> {
        let n = self.nodes.len();
        let mut adj = vec![Vec::new(); n];
        for &(_, a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            label[start] = next;
            while let Some(u) = stack.pop() {
                for &v in &adj[u] {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn components(&self) -> usize {
        self.component_labels().iter().copied().max().map_or(0, |m| m + 1)
    }

    /// Bridge flag per line id (false for disconnected lines).
    ///
    /// Iterative low-link DFS keyed on edge ids so that parallel lines are
    /// never reported as bridges.
    pub fn bridges(&self) -> Vec<bool> {
        let n = self.nodes.len();
        let n_lines = self.edges.iter().map(|e| e.0 + 1).max().unwrap_or(0);
        let mut out = vec![false; n_lines];
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for &(l, a, b) in &self.edges {
            adj[a].push((b, l));
            adj[b].push((a, l));
        }
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![usize::MAX; n];
        let mut clock = 0;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            disc[root] = clock;
            low[root] = clock;
            clock += 1;
            // (node, edge used to enter it, next adjacency index)
            let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
            while let Some(frame) = stack.last_mut() {
                let (u, parent_edge, i) = *frame;
                if i < adj[u].len() {
                    frame.2 += 1;
                    let (v, edge) = adj[u][i];
                    if Some(edge) == parent_edge {
                        continue;
                    }
                    if disc[v] == usize::MAX {
                        disc[v] = clock;
                        low[v] = clock;
                        clock += 1;
                        stack.push((v, Some(edge), 0));
                    } else {
                        low[u] = low[u].min(disc[v]);
                    }
                } else {
                    stack.pop();
                    if let (Some(edge), Some(parent)) = (parent_edge, stack.last()) {
                        let p = parent.0;
                        low[p] = low[p].min(low[u]);
                        if low[u] > disc[p] {
                            out[edge] = true;
                        }
                    }
                }
            }
        }
        out
    }
}
