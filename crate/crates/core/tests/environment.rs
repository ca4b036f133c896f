use powrl_core::environment::{reward, Action, DoneReason, EnvConfig, Environment, IllegalReason, Opponent};
use powrl_core::evaluation::{run_agent, AgentKind, EvalConfig};
use powrl_core::fixtures;
use powrl_core::grid::Bus;
use powrl_core::scenario::{Chronic, MaintenanceEvent, OpponentSchedule};
use powrl_core::topology::{ActionRanking, ActionSet, SubstationAction};
use proptest::prelude::*;
use std::sync::Arc;

fn fig1_env(level: f64, steps: usize, cfg: EnvConfig) -> Environment {
    let fx = fixtures::fig1();
    let chronic = fixtures::flat_chronic(&fx, level, steps);
    Environment::new(Arc::new(fx.grid), Arc::new(chronic), cfg, 0).unwrap()
}

fn training_env(chronic: Chronic, cfg: EnvConfig, seed: u64) -> Environment {
    Environment::new(Arc::new(fixtures::training_grid()), Arc::new(chronic), cfg, seed).unwrap()
}

/// The fig1 split at substation 2 that removes the overload.
fn fig1_split() -> Action {
    Action::SetSubstation(SubstationAction { substation: 2, buses: vec![Bus::One, Bus::Two, Bus::Two, Bus::Two] })
}

#[test]
fn reset_starts_at_reference_with_clear_timers() {
    let mut env = fig1_env(1.0, 10, EnvConfig::default());
    env.step(&fig1_split()).unwrap();
    env.step(&Action::DoNothing).unwrap();
    let obs = env.reset(4).unwrap();
    assert_eq!(obs.step, 0);
    assert!(obs.topo_vect.is_reference());
    assert!(obs.line_status.iter().all(|&s| s));
    assert!(obs.line_cooldown.iter().chain(&obs.substation_cooldown).chain(&obs.time_overflow).all(|&c| c == 0));
    assert_eq!(env.total_reward(), 0.0);
    assert_eq!(env.steps_survived(), 0);
    assert!((obs.rho[3] - 1.25).abs() < 1e-9);
}

#[test]
fn reward_values() {
    for (rho, r) in [(0.0, 2.0), (0.5, 1.5), (0.95, 0.1), (1.2, -0.4), (2.0, -2.0)] {
        assert!((reward(rho) - r).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn overloaded_line_trips_at_the_configured_count(k in 1u32..7) {
        let cfg = EnvConfig { overflow_steps_to_disconnect: k, ..EnvConfig::default() };
        let mut env = fig1_env(1.0, 20, cfg);
        for i in 1..=k {
            let r = env.step(&Action::DoNothing).unwrap();
            if i < k {
                prop_assert!(r.info.tripped_lines.is_empty());
                prop_assert_eq!(r.observation.time_overflow[3], i);
                prop_assert!(r.observation.line_status[3]);
            } else {
                prop_assert_eq!(&r.info.tripped_lines, &vec![3]);
                prop_assert!(!r.observation.line_status[3]);
                prop_assert_eq!(r.observation.line_cooldown[3], 12);
            }
        }
    }

    #[test]
    fn cooldown_violations_become_flagged_no_ops(c in 1u32..6) {
        let cfg = EnvConfig { substation_cooldown: c, line_cooldown: c, ..EnvConfig::default() };
        let mut env = fig1_env(0.5, 40, cfg);
        let split = fig1_split();
        let r = env.step(&split).unwrap();
        prop_assert_eq!(r.info.illegal, None);
        let after_split = env.topology().clone();
        let back = Action::SetSubstation(SubstationAction { substation: 2, buses: vec![Bus::One; 4] });
        for _ in 0..c {
            let r = env.step(&back).unwrap();
            prop_assert_eq!(r.info.illegal, Some(IllegalReason::SubstationCooldown));
            prop_assert_eq!(&r.info.applied, &Action::DoNothing);
            prop_assert_eq!(env.topology(), &after_split);
        }
        let r = env.step(&back).unwrap();
        prop_assert_eq!(r.info.illegal, None);
        prop_assert!(env.topology().is_reference());

        // same for a line
        let r = env.step(&Action::DisconnectLine { line: 4 }).unwrap();
        prop_assert_eq!(r.info.illegal, None);
        for _ in 0..c {
            let r = env.step(&Action::reconnect(4)).unwrap();
            prop_assert_eq!(r.info.illegal, Some(IllegalReason::LineCooldown));
            prop_assert!(!r.observation.line_status[4]);
        }
        let r = env.step(&Action::reconnect(4)).unwrap();
        prop_assert_eq!(r.info.illegal, None);
        prop_assert!(r.observation.line_status[4]);
    }

    #[test]
    fn maintenance_holds_the_line_out_for_its_duration(start in 0usize..20, duration in 1usize..15, line in 0usize..9) {
        let fx = fixtures::training();
        let mut chronic = fixtures::easy_chronic(&fx, 60);
        chronic.maintenance = vec![MaintenanceEvent { line, start, duration }];
        let mut env = training_env(chronic, EnvConfig::default(), 0);
        let mut rejected = Vec::new();
        while env.time_step() < start + duration + 3 {
            let t = env.time_step();
            let obs = env.observation();
            prop_assert_eq!(obs.in_maintenance(line), (start..start + duration).contains(&t));
            if (start..start + duration).contains(&t) {
                prop_assert!(!obs.line_status[line], "line {} connected at row {}", line, t);
            }
            let r = env.step(&Action::reconnect(line)).unwrap();
            match r.info.illegal {
                Some(IllegalReason::UnderMaintenance) => rejected.push(t),
                Some(IllegalReason::AlreadyConnected) => prop_assert!(t < start || t >= start + duration),
                None => prop_assert_eq!(t, start + duration),
                other => prop_assert!(false, "unexpected {:?}", other),
            }
        }
        prop_assert_eq!(rejected, (start..start + duration).collect::<Vec<_>>());
        prop_assert!(env.observation().line_status[line]);
    }
}

#[test]
fn hard_overflow_trips_immediately() {
    let mut env = fig1_env(1.7, 10, EnvConfig::default());
    assert!(env.observation().rho[3] >= 2.0);
    let r = env.step(&Action::DoNothing).unwrap();
    assert!(r.info.tripped_lines.contains(&3));
}

#[test]
fn splitting_a_grid_ends_with_load_not_served() {
    // line 2 is the only link to the generator at substation 3 once line 3 is out
    let mut env = fig1_env(0.5, 10, EnvConfig::default());
    env.step(&Action::DisconnectLine { line: 3 }).unwrap();
    let r = env.step(&Action::DisconnectLine { line: 2 }).unwrap();
    assert!(r.done);
    assert_eq!(r.done_reason, Some(DoneReason::LoadNotServed));
    assert_eq!(r.info.terminal_reward, -300.0);
    assert!(env.step(&Action::DoNothing).is_err());
}

#[test]
fn terminate_on_illegal_ends_the_episode() {
    let cfg = EnvConfig { terminate_on_illegal: true, ..EnvConfig::default() };
    let mut env = fig1_env(0.5, 10, cfg);
    let r = env.step(&Action::reconnect(0)).unwrap();
    assert_eq!(r.done_reason, Some(DoneReason::IllegalActionCascade));
    assert_eq!(r.info.illegal, Some(IllegalReason::AlreadyConnected));
}

#[test]
fn malformed_actions_are_errors() {
    let env = fig1_env(0.5, 10, EnvConfig::default());
    assert!(env.check_action(&Action::reconnect(99)).is_err());
    let short = Action::SetSubstation(SubstationAction { substation: 2, buses: vec![Bus::One] });
    assert!(env.check_action(&short).is_err());
}

#[test]
fn total_reward_is_the_sum_of_step_rewards() {
    let fx = fixtures::training();
    let mut env = training_env(fixtures::easy_chronic(&fx, 30), EnvConfig::default(), 0);
    let mut sum = 0.0;
    let mut last = None;
    while !env.is_done() {
        let r = env.step(&Action::DoNothing).unwrap();
        assert!((r.info.step_reward - reward(r.observation.rho_max())).abs() < 1e-12);
        sum += r.reward;
        last = Some(r);
    }
    let last = last.unwrap();
    assert_eq!(last.done_reason, Some(DoneReason::Survived));
    assert_eq!(last.info.terminal_reward, 500.0);
    assert_eq!(env.steps_survived(), 29);
    assert!((env.total_reward() - sum).abs() < 1e-9);
}

#[test]
fn identical_seeds_give_identical_logs() {
    let fx = fixtures::training();
    let grid = Arc::new(fx.grid.clone());
    let set = ActionSet::new(grid.name.clone(), ActionRanking::Manual, vec![]).unwrap();
    let cfg = EvalConfig::default();
    for chronic in fixtures::adversarial_suite(&fx, 3, 288, 11) {
        let chronic = Arc::new(chronic);
        for agent in [AgentKind::DoNothing, AgentKind::ExpertHeuristic] {
            let a = run_agent(&grid, &chronic, &set, agent, None, &cfg, 42).unwrap();
            let b = run_agent(&grid, &chronic, &set, agent, None, &cfg, 42).unwrap();
            assert_eq!(a.log.to_text(), b.log.to_text());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn simulate_is_pure_and_predicts_the_step(seed in any::<u64>(), script in prop::collection::vec(0usize..6, 1..25)) {
        let fx = fixtures::training();
        let mut chronic = fixtures::adversarial_suite(&fx, 1, 60, seed).remove(0);
        chronic.opponent = OpponentSchedule::none();
        let mut env = training_env(chronic, EnvConfig::default(), seed);
        let grid = env.grid().clone();
        let options: Vec<Action> = vec![
            Action::DoNothing,
            Action::SetSubstation(SubstationAction { substation: 1, buses: {
                let n = grid.substation(1).n_elements();
                (0..n).map(|i| if i % 2 == 1 { Bus::Two } else { Bus::One }).collect()
            }}),
            Action::SetSubstation(SubstationAction::all_bus_one(grid.substation(1))),
            Action::DisconnectLine { line: 4 },
            Action::reconnect(4),
            Action::reconnect(0),
        ];
        for pick in script {
            if env.is_done() {
                break;
            }
            let a = &options[pick];
            let before = env.state_hash();
            let sims: Vec<_> = options.iter().map(|o| env.simulate(o).unwrap()).collect();
            prop_assert_eq!(env.state_hash(), before);
            let r = env.step(a).unwrap();
            let sim = &sims[pick];
            prop_assert_eq!(sim.illegal, r.info.illegal);
            if r.done_reason.is_some_and(|d| d != DoneReason::Survived) {
                prop_assert!(!sim.feasible);
            } else {
                prop_assert!(sim.feasible);
                prop_assert_eq!(&sim.rho, &r.observation.rho);
            }
        }
    }
}

#[test]
fn opponent_rate_matches_its_probability() {
    let schedule = OpponentSchedule { targets: vec![0, 1, 2], probability: 0.02, budget: None, duration: 1, cooldown: 0 };
    let mut opp = Opponent::new(schedule, 9);
    let n = 100_000;
    let rho = [0.0, 1.0, 0.0];
    let mut hits = [0usize; 3];
    for _ in 0..n {
        if let Some(l) = opp.act(&rho, &[true; 3]) {
            hits[l] += 1;
        }
    }
    let attacks: usize = hits.iter().sum();
    let rate = attacks as f64 / n as f64;
    assert!((0.015..=0.025).contains(&rate), "rate {rate}");
    // weights 0.01, 1.01, 0.01
    let share = hits[1] as f64 / attacks as f64;
    assert!(share > 0.95, "share {share}");
}

#[test]
fn opponent_budget_is_respected() {
    let schedule = OpponentSchedule { targets: vec![0], probability: 1.0, budget: Some(3), duration: 1, cooldown: 0 };
    let mut opp = Opponent::new(schedule, 1);
    let n = (0..50).filter(|_| opp.act(&[0.5], &[true]).is_some()).count();
    assert_eq!(n, 3);
    assert_eq!(opp.budget_left(), Some(0));
    assert_eq!(opp.act(&[0.5], &[false]), None);
}

#[test]
fn opponent_attacks_are_spaced_by_its_cooldown() {
    let fx = fixtures::evaluation();
    let mut chronic = fixtures::flat_chronic(&fx, 0.6, 40);
    chronic.opponent = OpponentSchedule { targets: vec![0, 3, 6, 14], probability: 1.0, budget: Some(2), duration: 8, cooldown: 5 };
    let mut env = Environment::new(Arc::new(fx.grid), Arc::new(chronic), EnvConfig::default(), 0).unwrap();
    let mut at = Vec::new();
    for i in 1..=12 {
        let r = env.step(&Action::DoNothing).unwrap();
        if let Some(l) = r.info.attacked_line {
            assert!(!r.observation.line_status[l]);
            assert_eq!(r.observation.line_cooldown[l], 8);
            at.push(i);
        }
    }
    assert_eq!(at, vec![1, 6]);
}
