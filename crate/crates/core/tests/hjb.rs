use proptest::prelude::*;
use rfbsde_core::hjb::{ObstacleMode, Substeps};
use rfbsde_core::model::examples::{classical_value, example_classical, random_bounded};
use rfbsde_core::{solve_obstacle_hjb, ExampleConfig, HjbOptions, SpaceTimeGrid, ValueSurface};

fn auto() -> HjbOptions {
    HjbOptions {
        substeps: Substeps::Auto,
        ..HjbOptions::default()
    }
}

fn sup_gap(a: &ValueSurface, b: &ValueSurface) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn projected_surface_stays_below_obstacle(seed in 0u64..10_000) {
        let m = random_bounded(seed, &ExampleConfig::default()).unwrap();
        let g = SpaceTimeGrid::new(1.0, 100, -2.0, 2.0, 40).unwrap();
        let s = solve_obstacle_hjb(&m, &g, &auto()).unwrap();
        for i in 0..=g.nt() {
            for j in 0..=g.nx() {
                prop_assert!(s.value(i, j) <= m.h1(g.t(i), g.x(j)));
            }
        }
        for j in 0..=g.nx() {
            prop_assert_eq!(s.value(g.nt(), j), m.phi1(g.x(j)));
        }
    }
}

#[test]
fn penalty_solutions_approach_the_projection() {
    let m = example_classical(&ExampleConfig::default()).unwrap();
    let g = SpaceTimeGrid::new(1.0, 500, -2.0, 2.0, 50).unwrap();
    let projected = solve_obstacle_hjb(&m, &g, &auto()).unwrap();
    let gap = |n: f64| {
        let opts = HjbOptions {
            obstacle: ObstacleMode::Penalty { n },
            ..auto()
        };
        sup_gap(&solve_obstacle_hjb(&m, &g, &opts).unwrap(), &projected)
    };
    let (g2, g3) = (gap(1e2), gap(1e3));
    assert!(g2 > 0.0, "the obstacle should bind on x < 0");
    assert!(g3 <= 5.0 * g2, "gap {g3} at 1e3 vs {g2} at 1e2");
    assert!(g3 < g2);
}

#[test]
fn refinement_halves_the_interior_error() {
    let m = example_classical(&ExampleConfig::default()).unwrap();
    let error = |nt: usize, nx: usize| {
        let g = SpaceTimeGrid::new(1.0, nt, 0.1, 5.0, nx).unwrap();
        let s = solve_obstacle_hjb(&m, &g, &auto()).unwrap();
        let mut worst = 0.0f64;
        for i in 0..=nt {
            for j in (0..=nx).filter(|&j| (1.0..=4.0).contains(&g.x(j))) {
                let w = classical_value(1.0, g.t(i), g.x(j));
                worst = worst.max((s.value(i, j) - w).abs());
            }
        }
        worst
    };
    let (coarse, fine) = (error(250, 50), error(1000, 100));
    assert!(coarse >= 2.0 * fine, "coarse {coarse}, fine {fine}");
}

#[test]
fn raising_the_terminal_value_never_lowers_the_surface() {
    let m = example_classical(&ExampleConfig::default()).unwrap();
    let raised = m.to_builder().terminal1(|x| x + 0.1).build().unwrap();
    let g = SpaceTimeGrid::new(1.0, 400, 0.1, 5.0, 80).unwrap();
    let lo = solve_obstacle_hjb(&m, &g, &auto()).unwrap();
    let hi = solve_obstacle_hjb(&raised, &g, &auto()).unwrap();
    for (a, b) in lo.values().iter().zip(hi.values()) {
        assert!(b >= a, "{b} < {a}");
    }
}
