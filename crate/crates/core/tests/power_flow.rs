mod common;

use powrl_core::grid::{GeneratorSpec, Grid, LineSpec, LoadSpec};
use powrl_core::power_flow::{rho_max, solve_dc, InjectionProfile, PowerFlowError};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn line(id: usize, o: usize, e: usize, x: f64, limit: f64) -> LineSpec {
    LineSpec { id, origin: o, extremity: e, reactance: x, thermal_limit: limit }
}

#[test]
fn triangle_flows() {
    // node numbering 1,2,3 -> substations 0,1,2; injections +1, -1, 0
    let grid = Grid::new(
        "triangle",
        3,
        vec![line(0, 0, 1, 1.0, 1.0), line(1, 0, 2, 1.0, 1.0), line(2, 2, 1, 1.0, 1.0)],
        vec![GeneratorSpec { id: 0, substation: 0, p_max: 1.0 }],
        vec![LoadSpec { id: 0, substation: 1 }],
    )
    .unwrap();
    let inj = InjectionProfile { p_gen: vec![1.0], p_load: vec![1.0] };
    let sol = solve_dc(&grid, &grid.reference_topology(), &inj).unwrap();
    assert!((sol.p_flow[0] - 2.0 / 3.0).abs() < 1e-9);
    assert!((sol.p_flow[1] - 1.0 / 3.0).abs() < 1e-9);
    assert!((sol.p_flow[2] - 1.0 / 3.0).abs() < 1e-9);
}

#[test]
fn two_nodes_at_the_limit() {
    let grid = Grid::new(
        "pair",
        2,
        vec![line(0, 0, 1, 0.3, 0.5)],
        vec![GeneratorSpec { id: 0, substation: 0, p_max: 1.0 }],
        vec![LoadSpec { id: 0, substation: 1 }],
    )
    .unwrap();
    let inj = InjectionProfile { p_gen: vec![0.5], p_load: vec![0.5] };
    let sol = solve_dc(&grid, &grid.reference_topology(), &inj).unwrap();
    assert!((sol.p_flow[0] - 0.5).abs() < 1e-12);
    assert!((sol.rho[0] - 1.0).abs() < 1e-12);
}

#[test]
fn zero_injections_give_zero_flows() {
    let grid = powrl_core::fixtures::evaluation_grid();
    let inj = InjectionProfile::zeros(&grid);
    let sol = solve_dc(&grid, &grid.reference_topology(), &inj).unwrap();
    assert!(sol.p_flow.iter().all(|&f| f.abs() < 1e-15));
    assert_eq!(sol.rho_max(), 0.0);
}

#[test]
fn rho_max_examples() {
    assert_eq!(rho_max(&[0.3, 0.9, 0.1]), 0.9);
    assert_eq!(rho_max(&[0.0, 0.0]), 0.0);
    assert_eq!(rho_max(&[]), 0.0);
}

#[test]
fn injection_on_an_island_is_reported() {
    let grid = Grid::new(
        "path",
        3,
        vec![line(0, 0, 1, 0.1, 1.0), line(1, 1, 2, 0.1, 1.0)],
        vec![GeneratorSpec { id: 0, substation: 0, p_max: 2.0 }],
        vec![LoadSpec { id: 0, substation: 2 }],
    )
    .unwrap();
    let mut topo = grid.reference_topology();
    topo.disconnect_line(&grid, 1);
    let inj = InjectionProfile { p_gen: vec![0.4], p_load: vec![0.4] };
    assert!(matches!(solve_dc(&grid, &topo, &inj), Err(PowerFlowError::IslandedGrid { .. })));
}

#[test]
fn over_capacity_load_is_slack_infeasible() {
    let grid = powrl_core::fixtures::fig1_grid();
    let inj = InjectionProfile { p_gen: vec![3.0, 1.0], p_load: vec![3.0, 1.5] };
    assert!(matches!(
        solve_dc(&grid, &grid.reference_topology(), &inj),
        Err(PowerFlowError::SlackInfeasible { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_dense_oracle_and_balances(seed in any::<u64>()) {
        common::flow::check_case(seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn reversing_a_line_negates_its_flow(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = common::random_grid(&mut rng, 6);
        let inj = common::random_injection(&mut rng, &grid);
        let l = pick.index(grid.n_lines());
        let mut lines = grid.lines().to_vec();
        let spec = &mut lines[l];
        std::mem::swap(&mut spec.origin, &mut spec.extremity);
        let flipped = Grid::new("flipped", grid.n_substations(), lines, grid.generators().to_vec(), grid.loads().to_vec()).unwrap();
        let a = solve_dc(&grid, &grid.reference_topology(), &inj).unwrap();
        let b = solve_dc(&flipped, &flipped.reference_topology(), &inj).unwrap();
        for k in 0..grid.n_lines() {
            let expected = if k == l { -a.p_flow[k] } else { a.p_flow[k] };
            prop_assert!((b.p_flow[k] - expected).abs() < 1e-9);
            prop_assert!((b.rho[k] - a.rho[k]).abs() < 1e-9);
        }
    }
}
