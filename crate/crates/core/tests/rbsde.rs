use proptest::prelude::*;
use rfbsde_core::model::examples::{example_classical, random_bounded};
use rfbsde_core::{
    simulate_paths, solve_penalized, solve_reflected, ControlModel, ExampleConfig, OpenLoopControl, SolverConfig,
    TimeGrid,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reflected_solution_respects_obstacle_and_skorokhod(
        model_seed in 0u64..10_000,
        seed in 0u64..1000,
        x in -1.0..1.0f64,
        u in -1.0..=1.0f64,
    ) {
        let m = random_bounded(model_seed, &ExampleConfig::default()).unwrap();
        let grid = TimeGrid::new(0.0, 1.0, 25).unwrap();
        let ens = simulate_paths(&m, 0.0, &[x], &OpenLoopControl::constant(u), &grid, 400, seed).unwrap();
        let sol = solve_reflected(&m, &ens, &SolverConfig::default()).unwrap();
        let d = &sol.diagnostics;
        prop_assert_eq!(d.max_obstacle_violation, 0.0);
        prop_assert_eq!(d.terminal_mismatch, 0.0);
        prop_assert!(d.max_skorokhod_slack <= 1e-8 * (1.0 + d.sup_abs_y));
        for p in 0..sol.paths() {
            let xn = ens.state1(p, 25);
            prop_assert_eq!(sol.y(p, 25), m.phi1(xn));
            for i in 0..=25 {
                prop_assert!(sol.y(p, i) <= m.h1(grid.node(i), ens.state1(p, i)));
            }
            for i in 0..25 {
                prop_assert!(sol.k(p, i + 1) >= sol.k(p, i));
            }
        }
    }

    #[test]
    fn penalized_values_decrease_towards_reflected(
        model_seed in 0u64..10_000,
        x in -1.0..1.0f64,
    ) {
        // Without z in the driver the discrete scheme is monotone, so the
        // ordering holds up to roundoff.
        let full = random_bounded(model_seed, &ExampleConfig::default()).unwrap();
        let base = full.clone();
        let m = full.to_builder().driver1(move |r, x, y, _z, u| base.f1(r, x, y, 0.0, u)).build().unwrap();
        let (values, reflected) = penalized_ladder(&m, x, model_seed);
        let tol = 1e-9 * (1.0 + reflected.abs());
        for w in values.windows(2) {
            prop_assert!(w[1] <= w[0] + tol, "{:?}", values);
        }
        prop_assert!(values[3] >= reflected - tol, "{:?} vs {}", values, reflected);
    }

    #[test]
    fn penalized_values_with_z_driver_stay_near_monotone(
        model_seed in 0u64..10_000,
        x in -1.0..1.0f64,
    ) {
        // The regressed Z feeds the driver, and Gaussian increments break the
        // discrete comparison. Over 1500 random models the drift upward in n
        // peaked at 4e-4 relative and the undershoot of the reflected value at
        // 1.4e-5, independent of the path count.
        let m = random_bounded(model_seed, &ExampleConfig::default()).unwrap();
        let (values, reflected) = penalized_ladder(&m, x, model_seed);
        for w in values.windows(2) {
            prop_assert!(w[1] <= w[0] + 2e-3 * (1.0 + w[0].abs()), "{:?}", values);
        }
        prop_assert!(values[3] >= reflected - 1e-4 * (1.0 + reflected.abs()), "{:?} vs {}", values, reflected);
    }
}

fn penalized_ladder(m: &ControlModel, x: f64, seed: u64) -> (Vec<f64>, f64) {
    let grid = TimeGrid::new(0.0, 1.0, 25).unwrap();
    let ens = simulate_paths(m, 0.0, &[x], &OpenLoopControl::constant(0.0), &grid, 1000, seed).unwrap();
    let cfg = SolverConfig::default();
    let reflected = solve_reflected(m, &ens, &cfg).unwrap().initial_value();
    let values = [1.0, 10.0, 100.0, 1000.0]
        .iter()
        .map(|&n| {
            let sol = solve_penalized(m, &ens, n, &cfg).unwrap();
            assert_eq!(sol.diagnostics.terminal_mismatch, 0.0);
            sol.initial_value()
        })
        .collect();
    (values, reflected)
}

#[test]
fn larger_driver_gives_larger_penalized_values() {
    let m = example_classical(&ExampleConfig::default()).unwrap();
    let shifted = {
        let base = m.clone();
        m.to_builder()
            .driver1(move |r, x, y, z, u| base.f1(r, x, y, z, u) + 0.3)
            .build()
            .unwrap()
    };
    let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
    let ens = simulate_paths(&m, 0.0, &[1.0], &OpenLoopControl::constant(0.0), &grid, 4000, 0).unwrap();
    let cfg = SolverConfig::default();
    for n in [1.0, 100.0] {
        let lo = solve_penalized(&m, &ens, n, &cfg).unwrap();
        let hi = solve_penalized(&shifted, &ens, n, &cfg).unwrap();
        for p in 0..ens.paths() {
            for i in 0..=50 {
                assert!(hi.y(p, i) >= lo.y(p, i) - 1e-9, "n = {n}, path {p}, node {i}");
            }
        }
    }
}
