#![allow(dead_code)]

use powrl_core::grid::{Bus, GeneratorSpec, Grid, LineSpec, LoadSpec, TopologyVector};
use powrl_core::power_flow::InjectionProfile;
use powrl_core::topology::enumerate_valid_topologies;
use rand::seq::IndexedRandom;
use rand::Rng;

/// Connected random grid: a random spanning tree plus extra lines
/// (parallel lines allowed), 1-3 generators, 1-4 loads.
pub fn random_grid<R: Rng>(rng: &mut R, max_subs: usize) -> Grid {
    let n = rng.random_range(2..=max_subs);
    let mut ends = Vec::new();
    for s in 1..n {
        ends.push((rng.random_range(0..s), s));
    }
    for _ in 0..rng.random_range(0..=n) {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n);
        while b == a {
            b = rng.random_range(0..n);
        }
        ends.push((a, b));
    }
    let lines = ends
        .iter()
        .enumerate()
        .map(|(id, &(o, e))| {
            let (origin, extremity) = if rng.random_bool(0.5) { (o, e) } else { (e, o) };
            LineSpec {
                id,
                origin,
                extremity,
                reactance: rng.random_range(0.05..1.0),
                thermal_limit: rng.random_range(0.2..2.0),
            }
        })
        .collect();
    let gens = (0..rng.random_range(1..=3))
        .map(|id| GeneratorSpec { id, substation: rng.random_range(0..n), p_max: rng.random_range(0.5..3.0) })
        .collect();
    let loads = (0..rng.random_range(1..=4)).map(|id| LoadSpec { id, substation: rng.random_range(0..n) }).collect();
    Grid::new("random", n, lines, gens, loads).expect("spanning tree keeps the grid connected")
}

/// Random valid bus assignment at each substation, then some lines out.
pub fn random_topology<R: Rng>(rng: &mut R, grid: &Grid, p_split: f64, p_line_out: f64) -> TopologyVector {
    let mut topo = grid.reference_topology();
    for sub in grid.substations() {
        if rng.random_bool(p_split) {
            let options = enumerate_valid_topologies(sub).unwrap();
            topo = options.choose(rng).unwrap().apply(grid, &topo);
        }
    }
    for l in 0..grid.n_lines() {
        if rng.random_bool(p_line_out) {
            topo.disconnect_line(grid, l);
        }
    }
    topo
}

/// Loads within total capacity; generator set-points deliberately off
/// balance so the slack distribution is exercised.
pub fn random_injection<R: Rng>(rng: &mut R, grid: &Grid) -> InjectionProfile {
    let cap: f64 = grid.generators().iter().map(|g| g.p_max).sum();
    let mut p_load: Vec<f64> = (0..grid.n_loads()).map(|_| rng.random_range(0.0..1.0)).collect();
    let total: f64 = p_load.iter().sum();
    if total > 0.9 * cap {
        let k = 0.9 * cap / total;
        p_load.iter_mut().for_each(|p| *p *= k);
    }
    let p_gen = grid.generators().iter().map(|g| rng.random_range(0.0..g.p_max)).collect();
    InjectionProfile { p_gen, p_load }
}

pub fn bus_count(topo: &TopologyVector, bus: Bus) -> usize {
    topo.buses().iter().filter(|&&b| b == bus).count()
}

pub mod gate {
    use powrl_core::controller::{Controller, ControllerConfig, Exhaustive, Propose};
    use powrl_core::environment::{Action, EnvConfig, Environment};
    use powrl_core::fixtures::{self, Fixture};
    use powrl_core::ppo::{NetworkShape, PolicyParams, PolicyProposer};
    use powrl_core::scenario::{Chronic, OpponentSchedule};
    use powrl_core::topology::{reduce_action_space, ActionSet, ReductionConfig, enumerate_valid_topologies};
    use rand::seq::IndexedRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    #[derive(Debug, Default, Clone, PartialEq)]
    pub struct GateAudit {
        pub episodes: usize,
        pub decisions: usize,
        pub rl_decisions: usize,
        /// RL-branch decisions taken while the simulated do-nothing loading
        /// was below the threshold.
        pub rl_below_threshold: usize,
        /// Controller actions that increased the number of electrical
        /// components.
        pub graph_splits: usize,
        pub illegal: usize,
    }

    /// Steps `env` to the end under the controller and checks every
    /// decision before it is applied.
    pub fn audit_episode(
        env: &mut Environment,
        controller: &mut Controller,
        proposer: &mut dyn Propose,
        actions: &ActionSet,
        audit: &mut GateAudit,
    ) {
        controller.reset();
        audit.episodes += 1;
        let threshold = controller.config().rho_threshold;
        while !env.is_done() {
            let d = controller.decide(env, proposer, actions).unwrap();
            audit.decisions += 1;
            if d.branch.is_rl() {
                audit.rl_decisions += 1;
                if d.rho_do_nothing < threshold {
                    audit.rl_below_threshold += 1;
                }
            }
            let grid = env.grid().clone();
            let topo = env.topology().clone();
            let after = match &d.action {
                Action::SetSubstation(sa) => Some(sa.apply(&grid, &topo)),
                Action::DisconnectLine { line } => {
                    let mut t = topo.clone();
                    t.disconnect_line(&grid, *line);
                    Some(t)
                }
                _ => None,
            };
            if let Some(after) = after {
                if grid.electrical_graph(&after).components() > grid.electrical_graph(&topo).components() {
                    audit.graph_splits += 1;
                }
            }
            if env.check_action(&d.action).unwrap().is_some() {
                audit.illegal += 1;
            }
            env.step(&d.action).unwrap();
        }
    }

    pub struct Setting {
        pub fixture: Fixture,
        pub grid: Arc<powrl_core::grid::Grid>,
        pub actions: ActionSet,
        pub params: PolicyParams,
    }

    pub fn settings() -> Vec<Setting> {
        [fixtures::fig1(), fixtures::training(), fixtures::evaluation()]
            .into_iter()
            .enumerate()
            .map(|(i, fixture)| {
                let grid = Arc::new(fixture.grid.clone());
                let chronics: Vec<Arc<Chronic>> =
                    fixtures::adversarial_suite(&fixture, 3, 96, 100 + i as u64).into_iter().map(Arc::new).collect();
                let actions = reduce_action_space(&grid, &chronics, 10, &ReductionConfig::default()).unwrap();
                let shape = NetworkShape { actor_hidden: vec![16], critic_hidden: vec![8] };
                let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
                let params = PolicyParams::new(powrl_core::ppo::feature_len(&grid), actions.len(), &shape, &mut rng);
                Setting { fixture, grid, actions, params }
            })
            .collect()
    }

    /// `n` short episodes cycling through fixtures, load levels and
    /// proposers (exhaustive, greedy policy, exploring policy).
    pub fn mixed_audit(n: usize, steps: usize, threshold: f64) -> GateAudit {
        let settings = settings();
        let mut audit = GateAudit::default();
        let cfg = ControllerConfig { rho_threshold: threshold, ..ControllerConfig::default() };
        for i in 0..n {
            let s = &settings[i % settings.len()];
            let mut rng = ChaCha8Rng::seed_from_u64(0x6A7E ^ i as u64);
            let mut chronic = fixtures::adversarial_suite(&s.fixture, 1, steps, i as u64).remove(0);
            if s.fixture.attack_targets.is_empty() {
                let level = rng.random_range(0.6..1.1);
                chronic = fixtures::flat_chronic(&s.fixture, level, steps);
            }
            let Ok(mut env) = Environment::new(s.grid.clone(), Arc::new(chronic), EnvConfig::default(), i as u64) else {
                continue;
            };
            let mut controller = Controller::new(cfg.clone()).unwrap();
            match (i / settings.len()) % 3 {
                0 => audit_episode(&mut env, &mut controller, &mut Exhaustive, &s.actions, &mut audit),
                1 => audit_episode(&mut env, &mut controller, &mut PolicyProposer::greedy(&s.params), &s.actions, &mut audit),
                _ => {
                    let mut p = PolicyProposer::exploring(&s.params, ChaCha8Rng::seed_from_u64(i as u64));
                    audit_episode(&mut env, &mut controller, &mut p, &s.actions, &mut audit)
                }
            }
        }
        audit
    }

    /// Starts from `k` random connected bus splits on a calm, attack-free
    /// chronic and returns `(k, safe steps until the reference topology)`,
    /// with `None` steps when it was never reached. Returns `None` when
    /// the sampled split state is itself not safe.
    pub fn recovery_trial(seed: u64) -> Option<(usize, Option<usize>)> {
        let fx = fixtures::training();
        let grid = Arc::new(fx.grid.clone());
        let mut chronic = fixtures::easy_chronic(&fx, 60);
        chronic.opponent = OpponentSchedule::none();
        let mut env = Environment::new(grid.clone(), Arc::new(chronic), EnvConfig::default(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut topo = grid.reference_topology();
        for sub in grid.substations() {
            if rng.random_bool(0.5) {
                let options: Vec<_> = enumerate_valid_topologies(sub)
                    .unwrap()
                    .into_iter()
                    .filter(|a| !a.is_all_bus_one() && grid.electrical_graph(&a.apply(&grid, &topo)).components() == 1)
                    .collect();
                if let Some(a) = options.choose(&mut rng) {
                    topo = a.apply(&grid, &topo);
                }
            }
        }
        let k = topo.deviated_substations(&grid).len();
        if env.force_topology(topo).is_err() || env.simulate(&Action::DoNothing).unwrap().rho_max >= 0.95 {
            return None;
        }
        let set = ActionSet::new(grid.name.clone(), powrl_core::topology::ActionRanking::Manual, vec![]).unwrap();
        let mut controller = Controller::new(ControllerConfig::default()).unwrap();
        let mut safe = 0;
        while !env.topology().is_reference() {
            if env.is_done() || safe > k {
                return Some((k, None));
            }
            let d = controller.decide(&env, &mut Exhaustive, &set).unwrap();
            if d.rho_do_nothing < controller.config().rho_threshold {
                safe += 1;
            }
            env.step(&d.action).unwrap();
        }
        Some((k, Some(safe)))
    }
}

pub mod learner {
    use ndarray::Array2;
    use powrl_core::ppo::{log_softmax, loss_and_grads, Batch, NetworkShape, PPOConfig, PolicyParams};
    use rand::Rng;

    /// Advantages by the direct double sum: `A_t = Σ_l (γλ)^l δ_{t+l}`,
    /// stopping after the first terminal transition at or after `t`.
    pub fn gae_oracle(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> Vec<f64> {
        let n = rewards.len();
        let delta = |t: usize| {
            let next = if t + 1 < n && !dones[t] { values[t + 1] } else { 0.0 };
            rewards[t] + gamma * next - values[t]
        };
        (0..n)
            .map(|t| {
                let mut a = 0.0;
                for (l, k) in (t..n).enumerate() {
                    a += (gamma * lambda).powi(l as i32) * delta(k);
                    if dones[k] {
                        break;
                    }
                }
                a
            })
            .collect()
    }

    pub fn random_trajectory<R: Rng>(rng: &mut R) -> (Vec<f64>, Vec<f64>, Vec<bool>, f64, f64) {
        let n = rng.random_range(1..=200);
        let rewards = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let values = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let dones = (0..n).map(|_| rng.random_bool(0.05)).collect();
        (rewards, values, dones, rng.random_range(0.8..1.0), rng.random_range(0.0..=1.0))
    }

    /// Denominator floor of the relative error; gradients smaller than this
    /// are compared in absolute terms.
    pub const REL_FLOOR: f64 = 1e-6;
    pub const FD_STEP: f64 = 1e-5;

    fn total_loss(p: &PolicyParams, b: &Batch, cfg: &PPOConfig) -> f64 {
        loss_and_grads(p, b, cfg).loss
    }

    /// Worst relative error between analytic and central-difference
    /// gradients of the full loss, over every actor and critic parameter of
    /// one random small network and batch.
    pub fn gradient_check<R: Rng>(rng: &mut R) -> f64 {
        let input = rng.random_range(2..=6);
        let n_actions = rng.random_range(2..=5);
        let hidden = |rng: &mut R| (0..rng.random_range(1..=2)).map(|_| rng.random_range(2..=8)).collect::<Vec<_>>();
        let shape = NetworkShape { actor_hidden: hidden(rng), critic_hidden: hidden(rng) };
        let mut params = PolicyParams::new(input, n_actions, &shape, rng);
        // larger output weights than the near-uniform default, so the
        // softmax terms matter
        for x in params.actor.layers.last_mut().unwrap().w.iter_mut() {
            *x *= 50.0;
        }
        // nonzero biases: with zero biases a unit whose inputs are all dead
        // sits exactly on the ReLU kink
        for layer in params.actor.layers.iter_mut().chain(params.critic.layers.iter_mut()) {
            layer.b.mapv_inplace(|_| rng.random_range(-0.3..0.3));
        }
        let n = rng.random_range(1..=6);
        let states = Array2::from_shape_simple_fn((n, input), || rng.random_range(-1.0..1.0));
        let logits = params.actor.forward(states.view());
        let actions: Vec<usize> = (0..n).map(|_| rng.random_range(0..n_actions)).collect();
        // log-ratios either well inside (±0.1) or well outside (±0.4..0.6)
        // the clip range 0.2, keeping finite differences off the kinks
        let old_log_probs = (0..n)
            .map(|i| {
                let lp = log_softmax(logits.row(i))[actions[i]];
                let off = if rng.random_bool(0.5) {
                    rng.random_range(-0.1..0.1)
                } else {
                    rng.random_range(0.4..0.6) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }
                };
                lp - off
            })
            .collect();
        let batch = Batch {
            states,
            actions,
            old_log_probs,
            advantages: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
            returns: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        };
        let cfg = PPOConfig { entropy_coef: 0.05, ..PPOConfig::default() };
        let out = loss_and_grads(&params, &batch, &cfg);
        let mut worst: f64 = 0.0;
        for critic in [false, true] {
            let grads = if critic { &out.critic_grads } else { &out.actor_grads };
            let n_layers = grads.layers.len();
            for li in 0..n_layers {
                let (gw, gb) = &grads.layers[li];
                let n_w = gw.len();
                for k in 0..n_w + gb.len() {
                    let cols = gw.ncols();
                    let analytic = if k < n_w { gw[[k / cols, k % cols]] } else { gb[k - n_w] };
                    let eval = |delta: f64| {
                        let mut p = params.clone();
                        let net = if critic { &mut p.critic } else { &mut p.actor };
                        let layer = &mut net.layers[li];
                        if k < n_w {
                            layer.w[[k / cols, k % cols]] += delta;
                        } else {
                            layer.b[k - n_w] += delta;
                        }
                        total_loss(&p, &batch, &cfg)
                    };
                    let numeric = (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP);
                    let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
                    worst = worst.max(rel);
                }
            }
        }
        worst
    }
}

/// Counts straight from log text with generic JSON values, sharing no code
/// with the analysis module: `(distinct substations, distinct actions,
/// counted actions)`.
pub fn reparse_diversity(texts: &[String]) -> (usize, usize, usize) {
    use std::collections::BTreeSet;
    let mut subs = BTreeSet::new();
    let mut actions = BTreeSet::new();
    let mut total = 0;
    for text in texts {
        for line in text.lines().skip(2).filter(|l| !l.trim().is_empty()) {
            let v: serde_json::Value = serde_json::from_str(line).expect("record is JSON");
            if v["action"]["kind"] != "set_substation" || v["decision"]["branch"] == "recovery" {
                continue;
            }
            let sub = v["action"]["substation"].as_u64().unwrap();
            subs.insert(sub);
            actions.insert((sub, v["action"]["buses"].to_string()));
            total += 1;
        }
    }
    (subs.len(), actions.len(), total)
}

pub mod flow {
    use nalgebra::{DMatrix, DVector};
    use powrl_core::grid::{Bus, Element, Grid, TopologyVector};
    use powrl_core::power_flow::{solve_dc, InjectionProfile, PowerFlowError};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    /// Flows from a dense Laplacian solve, built from scratch: every connected
    /// component gets its own grounded reference node.
    pub fn oracle_flows(grid: &Grid, topo: &TopologyVector, inj: &InjectionProfile) -> Option<Vec<f64>> {
        let mut index: BTreeMap<(usize, Bus), usize> = BTreeMap::new();
        for p in 0..topo.len() {
            let b = topo.get(p);
            if b.is_connected() {
                let key = (grid.substation_of(grid.element_at(p)), b);
                let next = index.len();
                index.entry(key).or_insert(next);
            }
        }
        let n = index.len();
        let node = |e: Element| -> Option<usize> {
            let b = topo.get(grid.position(e));
            b.is_connected().then(|| index[&(grid.substation_of(e), b)])
        };

        let cap: f64 = grid.generators().iter().map(|g| g.p_max).sum();
        let mismatch = inj.p_load.iter().sum::<f64>() - inj.p_gen.iter().sum::<f64>();
        let mut p = DVector::<f64>::zeros(n);
        for (g, spec) in grid.generators().iter().enumerate() {
            p[node(Element::Generator(g))?] += inj.p_gen[g] + mismatch * spec.p_max / cap;
        }
        for d in 0..grid.n_loads() {
            p[node(Element::Load(d))?] -= inj.p_load[d];
        }

        let mut lap = DMatrix::<f64>::zeros(n, n);
        let mut edges = Vec::new();
        for l in 0..grid.n_lines() {
            if let (Some(a), Some(b)) = (node(Element::LineOrigin(l)), node(Element::LineExtremity(l))) {
                let y = 1.0 / grid.line(l).reactance;
                lap[(a, a)] += y;
                lap[(b, b)] += y;
                lap[(a, b)] -= y;
                lap[(b, a)] -= y;
                edges.push((l, a, b, y));
            }
        }
        // components by repeated relaxation
        let mut comp: Vec<usize> = (0..n).collect();
        loop {
            let mut changed = false;
            for &(_, a, b, _) in &edges {
                let m = comp[a].min(comp[b]);
                if comp[a] != m || comp[b] != m {
                    comp[a] = m;
                    comp[b] = m;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        // a component with nonzero net injection cannot be balanced
        let mut net: BTreeMap<usize, f64> = BTreeMap::new();
        for v in 0..n {
            *net.entry(comp[v]).or_default() += p[v];
        }
        if net.values().any(|x| x.abs() > 1e-9) {
            return None;
        }
        for v in 0..n {
            if comp[v] == v {
                for k in 0..n {
                    lap[(v, k)] = 0.0;
                    lap[(k, v)] = 0.0;
                }
                lap[(v, v)] = 1.0;
                p[v] = 0.0;
            }
        }
        let theta = lap.lu().solve(&p)?;
        let mut flows = vec![0.0; grid.n_lines()];
        for (l, a, b, y) in edges {
            flows[l] = y * (theta[a] - theta[b]);
        }
        Some(flows)
    }

    /// One random (grid, topology, injection) triple checked against the
    /// oracle and for nodal balance. `Ok(false)` when the triple is rejected
    /// as islanded, which the oracle must agree with.
    pub fn check_case(seed: u64) -> Result<bool, String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = super::random_grid(&mut rng, 5);
        let topo = super::random_topology(&mut rng, &grid, 0.5, 0.15);
        let inj = super::random_injection(&mut rng, &grid);
        let oracle = oracle_flows(&grid, &topo, &inj);
        let sol = match solve_dc(&grid, &topo, &inj) {
            Ok(s) => s,
            Err(PowerFlowError::IslandedGrid { .. }) => {
                if oracle.is_some() {
                    return Err("solver rejected a balanced topology".into());
                }
                return Ok(false);
            }
            Err(e) => return Err(format!("unexpected error {e}")),
        };
        let oracle = oracle.ok_or("solver accepted an unbalanced island")?;
        if sol.nodes.len() > 10 {
            return Err(format!("{} nodes", sol.nodes.len()));
        }
        for l in 0..grid.n_lines() {
            if (sol.p_flow[l] - oracle[l]).abs() >= 1e-9 {
                return Err(format!("line {l}: {} vs {}", sol.p_flow[l], oracle[l]));
            }
            if !topo.line_connected(&grid, l) && sol.rho[l] != 0.0 {
                return Err(format!("disconnected line {l} has rho {}", sol.rho[l]));
            }
        }
        // nodal balance
        let graph = grid.electrical_graph(&topo);
        let mut residual = vec![0.0; graph.n_nodes()];
        for (g, &p) in sol.p_gen.iter().enumerate() {
            residual[graph.node_of_position[grid.position(Element::Generator(g))].unwrap()] += p;
        }
        for (d, &p) in inj.p_load.iter().enumerate() {
            residual[graph.node_of_position[grid.position(Element::Load(d))].unwrap()] -= p;
        }
        for &(l, o, e) in &graph.edges {
            residual[o] -= sol.p_flow[l];
            residual[e] += sol.p_flow[l];
        }
        for r in residual {
            if r.abs() >= 1e-9 {
                return Err(format!("nodal residual {r}"));
            }
        }
        Ok(true)
    }
}
