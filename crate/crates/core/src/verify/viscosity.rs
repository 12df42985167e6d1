use rayon::prelude::*;

use super::membership::{check_superdiff_membership, Membership, SuperdiffCandidate};
use super::{control_battery, ConditionRecord, McConfig, Verdict, VerificationReport};
use crate::error::{Error, Result};
use crate::hjb::{hamiltonian1, inf_hamiltonian1, SpaceTimeGrid, ValueSurface};
use crate::model::ControlModel;
use crate::rbsde::{cost_functional, solve_reflected, RbsdeSolution};
use crate::simulate::{simulate_closed_loop, simulate_paths, OpenLoopControl, PathEnsemble, TimeGrid};
use crate::synthesis::{selector_inputs, FeedbackLaw};

/// Grid tables `(𝕢, 𝕡, ℙ)` of candidate differential elements.
#[derive(Clone, Debug, PartialEq)]
pub struct TripleFields {
    grid: SpaceTimeGrid,
    q: Vec<f64>,
    p: Vec<f64>,
    pp: Vec<f64>,
}

impl TripleFields {
    pub fn new(grid: SpaceTimeGrid, q: Vec<f64>, p: Vec<f64>, pp: Vec<f64>) -> Result<Self> {
        let n = (grid.nt() + 1) * (grid.nx() + 1);
        if q.len() != n || p.len() != n || pp.len() != n {
            return Err(Error::Dimension(format!("triple tables need {n} entries each")));
        }
        Ok(Self { grid, q, p, pp })
    }

    pub fn constant(grid: SpaceTimeGrid, q: f64, p: f64, pp: f64) -> Self {
        let n = (grid.nt() + 1) * (grid.nx() + 1);
        Self {
            grid,
            q: vec![q; n],
            p: vec![p; n],
            pp: vec![pp; n],
        }
    }

    /// `(W_t, W_x, W_xx)` from finite differences, with the kink rule of
    /// feedback extraction on kink columns.
    pub fn from_surface(surface: &ValueSurface) -> Self {
        let g = *surface.grid();
        let n = (g.nt() + 1) * (g.nx() + 1);
        let (mut q, mut p, mut pp) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..=g.nt() {
            for j in 0..=g.nx() {
                let (_, slope, curv) = selector_inputs(surface, i, j);
                q.push(surface.time_derivative(i, j));
                p.push(slope);
                pp.push(curv);
            }
        }
        Self { grid: g, q, p, pp }
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn node(&self, i: usize, j: usize) -> (f64, f64, f64) {
        let k = i * (self.grid.nx() + 1) + j;
        (self.q[k], self.p[k], self.pp[k])
    }

    /// Value at the nearest node.
    pub fn eval(&self, t: f64, x: f64) -> (f64, f64, f64) {
        self.node(self.grid.nearest_t(t), self.grid.nearest_x(x))
    }
}

/// Stratified `(node, path)` sample: `time_samples` nodes spread over
/// `[0, N)`, `path_samples` paths spread over the ensemble.
fn stratified(ens: &PathEnsemble, mc: &McConfig) -> Vec<(usize, usize)> {
    let n = ens.steps();
    let m = ens.paths();
    let ts = mc.time_samples.min(n);
    let ps = mc.path_samples.min(m);
    (0..ts)
        .flat_map(|a| (0..ps).map(move |b| (a * n / ts, b * m / ps)))
        .collect()
}

/// First node at which each path leaves the spatial range of `g`, or the
/// number of steps if it never does. Triples are only known inside.
fn exit_nodes(ens: &PathEnsemble, g: &SpaceTimeGrid) -> Vec<usize> {
    (0..ens.paths())
        .map(|m| {
            (0..ens.steps())
                .find(|&i| {
                    let x = ens.state1(m, i);
                    !(x >= g.x_lo() && x <= g.x_hi())
                })
                .unwrap_or(ens.steps())
        })
        .collect()
}

fn exit_note(exits: &[usize], steps: usize) -> String {
    let left = exits.iter().filter(|&&e| e < steps).count();
    if left == 0 {
        String::new()
    } else {
        format!("; {left}/{} paths stopped on leaving the surface box", exits.len())
    }
}

struct MembershipTally {
    record: ConditionRecord,
    members: Vec<SuperdiffCandidate>,
}

fn membership_condition(
    name: &str,
    surface: &ValueSurface,
    candidates: Vec<SuperdiffCandidate>,
    mc: &McConfig,
) -> MembershipTally {
    let results: Vec<_> = candidates
        .par_iter()
        .map(|c| check_superdiff_membership(surface, c, &mc.membership))
        .collect();
    let count = |v: Membership| results.iter().filter(|r| r.verdict == v).count();
    let (member, non, inc) = (
        count(Membership::Member),
        count(Membership::NonMember),
        count(Membership::Inconclusive),
    );
    let total = results.len();
    let slack = results
        .iter()
        .map(|r| r.margin)
        .filter(|m| m.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let verdict = if non > 0 {
        Verdict::Fail
    } else if total > 0 && member as f64 >= mc.member_quota * total as f64 {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    };
    let worst = results
        .iter()
        .zip(&candidates)
        .find(|(r, _)| r.verdict == Membership::NonMember)
        .map(|(r, c)| {
            format!(
                "; first non-member ({}, {}, {}) at ({:.4}, {:.4}), margin {:.4e}",
                c.time_rate, c.slope, c.curvature, c.t, c.x, r.margin
            )
        })
        .unwrap_or_default();
    let members = results
        .iter()
        .zip(&candidates)
        .filter(|(r, _)| r.verdict == Membership::Member)
        .map(|(_, c)| *c)
        .collect();
    MembershipTally {
        record: ConditionRecord {
            name: name.into(),
            slack: if slack.is_finite() { slack } else { f64::NAN },
            tolerance: mc.membership.tol,
            verdict,
            note: format!("{member}/{total} members, {non} non-members, {inc} inconclusive{worst}"),
        },
        members,
    }
}

/// `p·σ = Z` in relative mean square over every path and node before `T`.
fn z_condition(
    name: &str,
    model: &ControlModel,
    ens: &PathEnsemble,
    sol: &RbsdeSolution,
    triple: &(dyn Fn(f64, f64) -> (f64, f64, f64) + Sync),
    exits: &[usize],
    mc: &McConfig,
) -> ConditionRecord {
    let (mut diff, mut zz, mut ss, mut count) = (0.0, 0.0, 0.0, 0usize);
    for (m, &exit) in exits.iter().enumerate() {
        for i in 0..exit {
            count += 1;
            let s = ens.grid().node(i);
            let x = ens.state1(m, i);
            let (_, p, _) = triple(s, x);
            let ps = p * model.sigma1(s, x, ens.control(m, i)[0]);
            let z = sol.z(m, i)[0];
            diff += (ps - z) * (ps - z);
            zz += z * z;
            ss += ps * ps;
        }
    }
    let denom = zz.max(ss);
    let slack = if denom == 0.0 { 0.0 } else { (diff / denom).sqrt() };
    ConditionRecord::measured(
        name,
        slack,
        mc.tol_z,
        format!(
            "rms(p sigma - Z) = {:.4e}{}",
            (diff / count.max(1) as f64).sqrt(),
            exit_note(exits, ens.steps())
        ),
    )
}

/// `E ∫ [q + ℍ(s, X, Y, p, P, u)] ds ≤ 0` up to three standard errors and
/// the bias budget.
fn integral_condition(
    name: &str,
    model: &ControlModel,
    ens: &PathEnsemble,
    sol: &RbsdeSolution,
    triple: &(dyn Fn(f64, f64) -> (f64, f64, f64) + Sync),
    exits: &[usize],
    mc: &McConfig,
) -> ConditionRecord {
    let dt = ens.grid().dt();
    let per_path: Vec<f64> = (0..ens.paths())
        .into_par_iter()
        .map(|m| {
            (0..exits[m])
                .map(|i| {
                    let s = ens.grid().node(i);
                    let x = ens.state1(m, i);
                    let (q, p, pp) = triple(s, x);
                    let h = hamiltonian1(model, s, x, sol.y(m, i), p, pp, ens.control(m, i)[0]);
                    (q + h) * dt
                })
                .sum()
        })
        .collect();
    let n = per_path.len() as f64;
    let mean = per_path.iter().sum::<f64>() / n;
    let var = per_path.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    ConditionRecord::measured(
        name,
        mean - 3.0 * se,
        mc.budget,
        format!("mean {mean:.6e} ± {se:.2e}{}", exit_note(exits, ens.steps())),
    )
}

/// `W(t, x) ≤ J(t, x; u) + 3·SE + budget` over the control battery.
fn value_condition(
    model: &ControlModel,
    surface: &ValueSurface,
    t: f64,
    x: f64,
    grid: &TimeGrid,
    mc: &McConfig,
) -> Result<ConditionRecord> {
    let battery = control_battery(model, t, mc.battery_random, mc.battery_switches, mc.seed);
    let w = surface.eval(t, x);
    let slacks: Vec<f64> = battery
        .par_iter()
        .map(|(_, u)| {
            cost_functional(model, t, &[x], u, grid, mc.paths, mc.seed, &mc.solver)
                .map(|e| w - e.value - 3.0 * e.standard_error)
        })
        .collect::<Result<_>>()?;
    let (k, worst) = slacks
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, (k, s)| if s > a.1 { (k, s) } else { a });
    Ok(ConditionRecord::measured(
        "value",
        worst,
        mc.budget,
        format!("W = {w:.6}; tightest control '{}'", battery[k].0),
    ))
}

fn check_point(model: &ControlModel, surface: &ValueSurface, t: f64, x: f64) -> Result<()> {
    if !model.is_scalar() {
        return Err(Error::Dimension("viscosity checks need a scalar model".into()));
    }
    if !surface.grid().contains(t, x) || t >= model.horizon() {
        return Err(Error::InvalidInput(format!(
            "(t, x) = ({t}, {x}) must lie in the surface box with t < T"
        )));
    }
    Ok(())
}

/// Conditions along the paths of `control` from `(t, x)`:
///
/// * `i`: the candidate triple at sampled path points is a right-time
///   superdifferential element of `W`;
/// * `ii`: `p̄·σ` matches the regression `Z`;
/// * `iii`: `E ∫ [q̄ + ℍ(s, X, Y, p̄, P̄, ū)] ds ≤ 0`;
/// * `value` (optional): `W(t, x)` does not exceed any battery cost.
///
/// Paths are stopped when they leave the spatial range of the surface.
pub fn verify_viscosity_conditions(
    model: &ControlModel,
    surface: &ValueSurface,
    t: f64,
    x: f64,
    control: &OpenLoopControl,
    candidate: &(dyn Fn(f64, f64) -> (f64, f64, f64) + Sync),
    mc: &McConfig,
) -> Result<VerificationReport> {
    mc.validate()?;
    check_point(model, surface, t, x)?;
    let grid = TimeGrid::new(t, model.horizon(), mc.steps)?;
    let ens = simulate_paths(model, t, &[x], control, &grid, mc.paths, mc.seed)?;
    let sol = solve_reflected(model, &ens, &mc.solver)?;
    let exits = exit_nodes(&ens, surface.grid());

    let candidates = stratified(&ens, mc)
        .into_iter()
        .map(|(i, m)| {
            let (s, y) = (grid.node(i), ens.state1(m, i));
            let (q, p, pp) = candidate(s, y);
            SuperdiffCandidate::new(s, y, q, p, pp)
        })
        .collect();
    let mut conditions = vec![
        membership_condition("i", surface, candidates, mc).record,
        z_condition("ii", model, &ens, &sol, candidate, &exits, mc),
        integral_condition("iii", model, &ens, &sol, candidate, &exits, mc),
    ];
    if mc.check_value {
        conditions.push(value_condition(model, surface, t, x, &grid, mc)?);
    }
    let mut fp = mc.fingerprint(t, x);
    fp.insert("control".into(), format!("{control:?}"));
    fp.insert("surface".into(), format!("{:?}", surface.provenance()));
    Ok(VerificationReport::assemble("viscosity", model, (t, x), conditions, fp))
}

/// Optimality of a feedback law certified by differential-element tables:
///
/// * `membership`: table triples at grid nodes visited by the closed loop
///   are right-time superdifferential elements of `W`;
/// * `inequality`: at those nodes `W − h ≤ q + inf_u ℍ(t, x, W, p, P, u)`;
/// * `i`: `E ∫ [𝕢 + ℍ(s, X, Y, 𝕡, ℙ, 𝕦(s, X))] ds ≤ 0`;
/// * `ii`: `𝕡·σ` matches the regression `Z`.
///
/// Paths are stopped when they leave the spatial range of the surface.
pub fn verify_feedback_optimality(
    model: &ControlModel,
    surface: &ValueSurface,
    law: &FeedbackLaw,
    fields: &TripleFields,
    t: f64,
    x: f64,
    mc: &McConfig,
) -> Result<VerificationReport> {
    mc.validate()?;
    check_point(model, surface, t, x)?;
    if fields.grid() != surface.grid() {
        return Err(Error::Dimension("triple tables must share the surface grid".into()));
    }
    let g = *surface.grid();
    let grid = TimeGrid::new(t, model.horizon(), mc.steps)?;
    let ens = simulate_closed_loop(model, law, t, &[x], &grid, mc.paths, mc.seed)?;
    let sol = solve_reflected(model, &ens, &mc.solver)?;

    let mut nodes: Vec<(usize, usize)> = stratified(&ens, mc)
        .into_iter()
        .map(|(i, m)| (g.nearest_t(grid.node(i)), g.nearest_x(ens.state1(m, i))))
        .collect();
    nodes.sort_unstable();
    nodes.dedup();
    let candidates: Vec<SuperdiffCandidate> = nodes
        .iter()
        .map(|&(i, j)| {
            let (q, p, pp) = fields.node(i, j);
            SuperdiffCandidate::new(g.t(i), g.x(j), q, p, pp)
        })
        .collect();
    let tally = membership_condition("membership", surface, candidates, mc);

    let gaps: Vec<f64> = tally
        .members
        .iter()
        .map(|c| {
            let w = surface.eval(c.t, c.x);
            let (inf, _) = inf_hamiltonian1(model, c.t, c.x, w, c.slope, c.curvature);
            (w - model.h1(c.t, c.x)) - (c.time_rate + inf)
        })
        .collect();
    let gap = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let inequality = ConditionRecord::measured(
        "inequality",
        if gaps.is_empty() { f64::NAN } else { gap },
        mc.membership.tol,
        format!("{} validated nodes", gaps.len()),
    );

    let exits = exit_nodes(&ens, &g);
    let lookup = |s: f64, y: f64| fields.eval(s, y);
    let conditions = vec![
        tally.record,
        inequality,
        integral_condition("i", model, &ens, &sol, &lookup, &exits, mc),
        z_condition("ii", model, &ens, &sol, &lookup, &exits, mc),
    ];
    let mut fp = mc.fingerprint(t, x);
    fp.insert("law".into(), law.provenance().source.clone());
    fp.insert("surface".into(), format!("{:?}", surface.provenance()));
    Ok(VerificationReport::assemble("feedback", model, (t, x), conditions, fp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::examples::{example_classical, example_viscosity, zero_model, ExampleConfig};

    fn mc() -> McConfig {
        McConfig {
            steps: 20,
            paths: 400,
            battery_random: 2,
            ..McConfig::default()
        }
    }

    fn viscosity_surface() -> ValueSurface {
        let g = SpaceTimeGrid::new(1.0, 40, -5.0, 5.0, 40).unwrap();
        ValueSurface::candidate("candidate-viscosity", g).unwrap()
    }

    #[test]
    fn origin_certificate_passes_with_zero_slacks() {
        let m = example_viscosity(&ExampleConfig::default()).unwrap();
        let s = viscosity_surface();
        let r = verify_viscosity_conditions(
            &m,
            &s,
            0.0,
            0.0,
            &OpenLoopControl::constant(1.0),
            &|_, _| (0.0, 1.0, 0.0),
            &mc(),
        )
        .unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r}");
        for c in &r.conditions {
            assert_eq!(c.slack, 0.0, "{}", c.name);
        }
    }

    #[test]
    fn negative_curvature_fails_condition_i() {
        let m = example_viscosity(&ExampleConfig::default()).unwrap();
        let s = viscosity_surface();
        let r = verify_viscosity_conditions(
            &m,
            &s,
            0.0,
            0.0,
            &OpenLoopControl::constant(1.0),
            &|_, _| (0.0, 1.0, -1.0),
            &mc(),
        )
        .unwrap();
        assert_eq!(r.condition("i").unwrap().verdict, Verdict::Fail);
        assert_eq!(r.verdict, Verdict::Fail);
    }

    #[test]
    fn zero_model_feedback_passes() {
        let m = zero_model(&ExampleConfig::default()).unwrap();
        let g = SpaceTimeGrid::new(1.0, 20, -3.0, 3.0, 30).unwrap();
        let s = ValueSurface::from_closed_form(g, "zero", std::sync::Arc::new(|_, _| 0.0), vec![]);
        let law = FeedbackLaw::constant(g, m.control_set().clone(), 0.0).unwrap();
        let fields = TripleFields::constant(g, 0.0, 0.0, 0.0);
        let r = verify_feedback_optimality(&m, &s, &law, &fields, 0.0, 0.5, &mc()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r}");
        for name in ["membership", "i", "ii"] {
            assert_eq!(r.condition(name).unwrap().slack, 0.0, "{r}");
        }
        // W − h = −1 with the obstacle at 1
        assert_eq!(r.condition("inequality").unwrap().slack, -1.0);
    }

    #[test]
    fn viscosity_feedback_from_origin_passes() {
        let m = example_viscosity(&ExampleConfig::default()).unwrap();
        let s = viscosity_surface();
        let law = FeedbackLaw::constant(*s.grid(), m.control_set().clone(), 1.0).unwrap();
        let fields = TripleFields::constant(*s.grid(), 0.0, 1.0, 0.0);
        let r = verify_feedback_optimality(&m, &s, &law, &fields, 0.0, 0.0, &mc()).unwrap();
        assert_eq!(r.verdict, Verdict::Pass, "{r}");
    }

    #[test]
    fn wrong_law_fails_integral_condition() {
        let m = example_classical(&ExampleConfig::default()).unwrap();
        let g = SpaceTimeGrid::new(1.0, 200, 0.1, 5.0, 100).unwrap();
        let s = ValueSurface::candidate("candidate-classical", g).unwrap();
        let law = FeedbackLaw::constant(g, m.control_set().clone(), 1.0).unwrap();
        let fields = TripleFields::from_surface(&s);
        let r = verify_feedback_optimality(&m, &s, &law, &fields, 0.0, 1.0, &mc()).unwrap();
        let i = r.condition("i").unwrap();
        assert_eq!(i.verdict, Verdict::Fail, "{r}");
        assert!(i.slack > 1.0);
        assert_eq!(r.verdict, Verdict::Fail);
    }
}
