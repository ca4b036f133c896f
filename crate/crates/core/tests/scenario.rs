mod common;

use powrl_core::analysis::{analyze, overflow_sequences};
use powrl_core::evaluation::{evaluate, AgentKind, EvalConfig};
use powrl_core::fixtures;
use powrl_core::scenario::log::EpisodeLog;
use powrl_core::scenario::{
    generate_chronic, load_chronic_for, parse_action_set, parse_chronic, parse_grid, save_chronic, write_action_set,
    write_chronic, write_grid, ChronicProfile, ScenarioError,
};
use powrl_core::topology::{reduce_action_space, ReductionConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

#[test]
fn daily_swing_matches_the_amplitude() {
    let g = fixtures::training_grid();
    for amplitude in [0.05, 0.15, 0.3] {
        let mut p = ChronicProfile::flat("swing", fixtures::suite_start(0), vec![0.4; g.n_loads()]);
        p.amplitude = amplitude;
        p.peak_hour = 17.0;
        let c = generate_chronic(&g, &p, 288, 0);
        let total: Vec<f64> = c.load_p.iter().map(|r| r.iter().sum()).collect();
        let hi = total.iter().copied().fold(f64::MIN, f64::max);
        let lo = total.iter().copied().fold(f64::MAX, f64::min);
        let expected = (1.0 + amplitude) / (1.0 - amplitude);
        assert!(((hi / lo) / expected - 1.0).abs() < 0.01, "amplitude {amplitude}: {}", hi / lo);
        let peak_row = total.iter().position(|&x| x == hi).unwrap();
        assert_eq!(peak_row, 17 * 12);
    }
}

#[test]
fn generation_covers_consumption_each_row() {
    let fx = fixtures::training();
    for c in fixtures::adversarial_suite(&fx, 4, 288, 2) {
        for (g, l) in c.gen_p.iter().zip(&c.load_p) {
            let (sg, sl): (f64, f64) = (g.iter().sum(), l.iter().sum());
            assert!((sg - sl).abs() < 1e-9);
            assert!(g.iter().zip(fx.grid.generators()).all(|(p, spec)| *p >= 0.0 && *p <= spec.p_max + 1e-9));
        }
    }
}

#[test]
fn suites_are_deterministic_in_the_seed() {
    let fx = fixtures::training();
    assert_eq!(fixtures::adversarial_suite(&fx, 3, 100, 5), fixtures::adversarial_suite(&fx, 3, 100, 5));
    assert_ne!(fixtures::adversarial_suite(&fx, 1, 100, 5), fixtures::adversarial_suite(&fx, 1, 100, 6));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grid_text_round_trips(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = common::random_grid(&mut rng, 8);
        prop_assert_eq!(parse_grid(&write_grid(&g)).unwrap(), g);
    }

    #[test]
    fn chronic_text_round_trips(seed in any::<u64>()) {
        let fx = fixtures::training();
        let c = fixtures::adversarial_suite(&fx, 1, 60, seed).remove(0);
        prop_assert_eq!(parse_chronic(&write_chronic(&c)).unwrap(), c);
    }
}

#[test]
fn bundled_grids_and_action_sets_round_trip() {
    for fx in [fixtures::fig1(), fixtures::training(), fixtures::evaluation()] {
        assert_eq!(parse_grid(&write_grid(&fx.grid)).unwrap(), fx.grid);
        let grid = Arc::new(fx.grid.clone());
        let chronics = vec![Arc::new(fixtures::flat_chronic(&fx, 1.0, 4))];
        let set = reduce_action_space(&grid, &chronics, 6, &ReductionConfig::default()).unwrap();
        assert_eq!(parse_action_set(&write_action_set(&set)).unwrap(), set);
    }
}

#[test]
fn malformed_files_report_where() {
    let text = write_grid(&fixtures::fig1_grid());
    assert!(matches!(parse_grid(&text.replace("POWRL-GRID", "NOPE")), Err(ScenarioError::BadHeader { .. })));
    assert!(matches!(parse_grid(&text.replace("POWRL-GRID 1", "POWRL-GRID 7")), Err(ScenarioError::Version { found: 7, .. })));
    let broken: String = text
        .lines()
        .map(|l| if l.starts_with("3 ") { "3 2 3 zero 0.2" } else { l })
        .collect::<Vec<_>>()
        .join("\n");
    let line = text.lines().position(|l| l.starts_with("3 ")).unwrap() + 1;
    match parse_grid(&broken) {
        Err(ScenarioError::Schema { line: got, .. }) => assert_eq!(got, line),
        other => panic!("expected a schema error, got {other:?}"),
    }
}

#[test]
fn chronic_for_a_different_grid_is_rejected() {
    let fx = fixtures::training();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.chronic");
    save_chronic(&fixtures::easy_chronic(&fx, 5), &path).unwrap();
    assert!(load_chronic_for(&path, &fx.grid).is_ok());
    assert!(matches!(load_chronic_for(&path, &fixtures::fig1_grid()), Err(ScenarioError::Reference(_))));
}

fn expert_logs() -> (Vec<EpisodeLog>, usize) {
    let fx = fixtures::training();
    let grid = Arc::new(fx.grid.clone());
    let chronics: Vec<_> = fixtures::adversarial_suite(&fx, 4, 288, 13).into_iter().map(Arc::new).collect();
    let set = reduce_action_space(&grid, &chronics, 10, &ReductionConfig::default()).unwrap();
    let report = evaluate(&grid, &chronics, &set, &[AgentKind::ExpertHeuristic], None, &EvalConfig::default()).unwrap();
    (report.logs, grid.n_substations())
}

#[test]
fn episode_logs_round_trip() {
    let (logs, _) = expert_logs();
    for log in &logs {
        let text = log.to_text();
        let back = EpisodeLog::parse(&text).unwrap();
        assert_eq!(back.to_text(), text);
    }
    assert!(EpisodeLog::parse("garbage\n").is_err());
}

#[test]
fn diversity_counts_match_an_independent_reparse() {
    let (logs, n_subs) = expert_logs();
    let report = analyze(&logs, n_subs, 5);
    let texts: Vec<String> = logs.iter().map(EpisodeLog::to_text).collect();
    let (subs, actions, total) = common::reparse_diversity(&texts);
    assert!(total > 0, "the expert never acted");
    assert_eq!(report.distinct_substations, subs);
    assert_eq!(report.distinct_actions, actions);
    assert_eq!(report.topology_actions, total);
    assert_eq!(report.per_substation.iter().sum::<usize>(), total);
    // unigram counts add up to the actions taken inside overflow events
    let in_events: usize = overflow_sequences(&logs).iter().map(Vec::len).sum();
    let unigrams: usize = report.ngrams.iter().filter(|g| g.substations.len() == 1).map(|g| g.count).sum();
    assert_eq!(unigrams, in_events);
    assert!(report.ngrams.windows(2).all(|w| w[0].count >= w[1].count));
}
