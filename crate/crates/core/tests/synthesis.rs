use rfbsde_core::hjb::{inf_hamiltonian, Substeps};
use rfbsde_core::model::examples::{example_classical, example_viscosity};
use rfbsde_core::synthesis::selector_inputs;
use rfbsde_core::{
    control_battery, cost_functional, evaluate_feedback, extract_feedback, hamiltonian, solve_obstacle_hjb,
    ControlModel, ExampleConfig, HamiltonianQuery, HjbOptions, SolverConfig, SpaceTimeGrid, TimeGrid, ValueSurface,
};

fn solved(m: &ControlModel, x_lo: f64, x_hi: f64) -> ValueSurface {
    let g = SpaceTimeGrid::new(1.0, 400, x_lo, x_hi, 40).unwrap();
    let opts = HjbOptions {
        substeps: Substeps::Auto,
        ..HjbOptions::default()
    };
    solve_obstacle_hjb(m, &g, &opts).unwrap()
}

fn models() -> Vec<(ControlModel, ValueSurface)> {
    let c = example_classical(&ExampleConfig::default()).unwrap();
    let v = example_viscosity(&ExampleConfig::default()).unwrap();
    let (sc, sv) = (solved(&c, 0.1, 5.0), solved(&v, -2.0, 2.0));
    vec![(c, sc), (v, sv)]
}

#[test]
fn extracted_control_attains_the_infimum() {
    for (m, s) in models() {
        let law = extract_feedback(&s, &m).unwrap();
        let g = *s.grid();
        for i in 0..=g.nt() {
            for j in 0..=g.nx() {
                let (t, x) = (g.t(i), g.x(j));
                let (w, p, pp) = selector_inputs(&s, i, j);
                let u = law.value(i, j);
                let at_law = hamiltonian(&m, &HamiltonianQuery::scalar(t, x, w, p, pp, u)).unwrap();
                let inf = inf_hamiltonian(&m, t, &[x], w, &[p], &[pp]).unwrap();
                assert_eq!(at_law, inf.value, "{} at ({t}, {x})", m.name());
                assert_eq!(inf.canonical(), &[u]);
            }
        }
    }
}

#[test]
fn shifting_the_driver_leaves_the_law_unchanged() {
    for (m, s) in models() {
        let base = m.clone();
        let shifted = m
            .to_builder()
            .driver1(move |r, x, y, z, u| base.f1(r, x, y, z, u) + 1.0)
            .build()
            .unwrap();
        let a = extract_feedback(&s, &m).unwrap();
        let b = extract_feedback(&s, &shifted).unwrap();
        assert_eq!(a.table(), b.table(), "{}", m.name());
    }
}

#[test]
fn feedback_cost_beats_the_battery() {
    let solver = SolverConfig::default();
    let grid = TimeGrid::new(0.0, 1.0, 50).unwrap();
    let paths = 4000;
    for ((m, s), x) in models().into_iter().zip([1.0, 1.0]) {
        let law = extract_feedback(&s, &m).unwrap().allow_irregular(true);
        let j = evaluate_feedback(&m, &law, 0.0, x, &grid, paths, 0, &solver).unwrap();
        for (name, u) in control_battery(&m, 0.0, 4, 4, 0) {
            let c = cost_functional(&m, 0.0, &[x], &u, &grid, paths, 0, &solver).unwrap();
            assert!(
                j.value <= c.value + 3.0 * c.standard_error,
                "{}: feedback {} vs {name} {} ± {}",
                m.name(),
                j.value,
                c.value,
                c.standard_error
            );
        }
    }
}
