//! One function per subcommand. Each returns the process exit code on
//! success and a [`CliError`] otherwise.

use std::fmt::Write as _;
use std::path::Path;

use rfbsde_core::model::examples::{classical_value, viscosity_value};
use rfbsde_core::verify::{check_membership, Membership, ProbeKind, Side, SuperdiffCandidate};
use rfbsde_core::{
    check_d1_d2, control_battery, cost_functional, evaluate_feedback, extract_feedback, residual, solve_obstacle_hjb,
    tree_oracle, validate_assumptions, verify_classical, verify_feedback_optimality, verify_viscosity_conditions,
    ConstantLaw, ControlModel, Estimate, FeedbackLaw, OpenLoopControl, ProbeBox, SpaceTimeGrid, TimeGrid, TripleFields,
    ValueSurface, VerificationReport,
};
use serde::Serialize;

use crate::config::{CostMethod, LawSource, RunConfig, VerifyMode};
use crate::error::{CliError, CliResult, EXIT_PASS, EXIT_VERIFY_FAIL};
use crate::manifest::Artifacts;

/// Bundle ids accepted by `paper`, with the catalog model each reproduces.
pub const BUNDLES: [(&str, &str); 4] = [
    ("5.1", "example-classical"),
    ("5.2", "example-viscosity"),
    ("example-classical", "example-classical"),
    ("example-viscosity", "example-viscosity"),
];

/// Nodes this close to the spatial edge are left out of error summaries.
const BOUNDARY_BAND: usize = 3;

fn verdict_exit(pass: bool) -> i32 {
    if pass {
        EXIT_PASS
    } else {
        EXIT_VERIFY_FAIL
    }
}

fn value_surface(cfg: &RunConfig, model: &ControlModel, grid: &SpaceTimeGrid) -> CliResult<ValueSurface> {
    if cfg.surface == "computed" {
        Ok(solve_obstacle_hjb(model, grid, &cfg.hjb)?)
    } else {
        Ok(ValueSurface::candidate(&cfg.surface, *grid)?)
    }
}

fn feedback_law(source: LawSource, value: f64, surface: &ValueSurface, model: &ControlModel) -> CliResult<FeedbackLaw> {
    Ok(match source {
        LawSource::Extracted => extract_feedback(surface, model)?,
        LawSource::Constant => FeedbackLaw::constant(*surface.grid(), model.control_set().clone(), value)?,
    })
}

fn time_grid(cfg: &RunConfig, model: &ControlModel) -> CliResult<TimeGrid> {
    Ok(TimeGrid::new(cfg.point.t, model.horizon(), cfg.mc.steps)?)
}

fn kink_note(surface: &ValueSurface) -> String {
    surface
        .kink_columns()
        .iter()
        .map(|j| format!("{j} (x = {})", surface.grid().x(*j)))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Largest `W − h` over the grid; positive values violate the obstacle.
fn obstacle_violation(surface: &ValueSurface, model: &ControlModel) -> f64 {
    let g = surface.grid();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..=g.nt() {
        for j in 0..=g.nx() {
            worst = worst.max(surface.value(i, j) - model.h1(g.t(i), g.x(j)));
        }
    }
    worst
}

/// Max relative error against a closed form on nodes away from the spatial
/// edges, with the location of the worst node.
/// Largest relative error over nodes off the boundary band whose `x` passes `keep`.
fn relative_error(
    surface: &ValueSurface,
    exact: impl Fn(f64, f64) -> f64,
    keep: impl Fn(f64) -> bool,
) -> (f64, f64, f64) {
    let g = surface.grid();
    let mut worst = (0.0, g.t(0), g.x(BOUNDARY_BAND));
    for i in 0..=g.nt() {
        for j in (BOUNDARY_BAND..=g.nx() - BOUNDARY_BAND).filter(|&j| keep(g.x(j))) {
            let (t, x) = (g.t(i), g.x(j));
            let w = exact(t, x);
            let err = (surface.value(i, j) - w).abs() / w.abs().max(1e-12);
            if err > worst.0 {
                worst = (err, t, x);
            }
        }
    }
    worst
}

fn run_solve(cfg: &RunConfig, model: &ControlModel, art: &mut Artifacts) -> CliResult<ValueSurface> {
    let grid = cfg.grid()?;
    let surface = art.timed("hjb", || value_surface(cfg, model, &grid))?;
    let res = art.timed("residual", || residual(&surface, model))?;
    let law = art.timed("synthesis", || extract_feedback(&surface, model))?;
    art.write_with("surface.csv", |w| surface.write_csv(w))?;
    art.write_with("residual.csv", |w| res.write_csv(w))?;
    art.write_with("law.csv", |w| law.write_csv(w))?;

    let kinks = kink_note(&surface);
    art.note("kink_columns", kinks.clone());
    art.note("surface", format!("{:?}", surface.provenance()));
    let (lo, hi) = (grid.x(BOUNDARY_BAND), grid.x(grid.nx() - BOUNDARY_BAND));
    let interior = res.max_abs_where(|_, x| x >= lo && x <= hi);
    println!(
        "surface {} on {} x {} nodes; residual max |r| = {:.3e} (interior {:.3e}); obstacle max(W - h) = {:+.3e}",
        model.name(),
        grid.nt() + 1,
        grid.nx() + 1,
        res.max_abs(),
        interior,
        obstacle_violation(&surface, model)
    );
    if !kinks.is_empty() {
        println!("kink columns: {kinks}");
    }
    Ok(surface)
}

pub fn solve(cfg: &RunConfig, out: &Path) -> CliResult<i32> {
    let model = cfg.model()?;
    let mut art = Artifacts::new(out)?;
    run_solve(cfg, &model, &mut art)?;
    art.finish("solve", cfg)?;
    Ok(EXIT_PASS)
}

fn estimate_cost(cfg: &RunConfig, model: &ControlModel, art: &mut Artifacts) -> CliResult<(String, Estimate)> {
    let (t, x) = (cfg.point.t, cfg.point.x);
    let c = &cfg.cost;
    match c.method {
        CostMethod::Mc => {
            let grid = time_grid(cfg, model)?;
            let control = OpenLoopControl::Constant(vec![c.control]);
            let est = art.timed("cost", || {
                cost_functional(
                    model,
                    t,
                    &[x],
                    &control,
                    &grid,
                    cfg.mc.paths,
                    cfg.mc.seed,
                    &cfg.mc.solver,
                )
            })?;
            Ok((format!("mc u={}", c.control), est))
        }
        CostMethod::Feedback => {
            let surface = art.timed("hjb", || value_surface(cfg, model, &cfg.grid()?))?;
            let law = feedback_law(c.law, c.law_value, &surface, model)?;
            let grid = time_grid(cfg, model)?;
            let est = art.timed("cost", || {
                evaluate_feedback(model, &law, t, x, &grid, cfg.mc.paths, cfg.mc.seed, &cfg.mc.solver)
            })?;
            let label = match c.law {
                LawSource::Extracted => "feedback extracted".to_string(),
                LawSource::Constant => format!("feedback u={}", c.law_value),
            };
            Ok((label, est))
        }
        CostMethod::Tree => {
            let law = ConstantLaw(vec![c.control]);
            let value = art.timed("cost", || tree_oracle(model, t, x, &law, c.tree_depth, c.tree_scheme))?;
            Ok((
                format!("tree u={} depth={}", c.control, c.tree_depth),
                Estimate {
                    value,
                    standard_error: 0.0,
                },
            ))
        }
    }
}

pub fn cost(cfg: &RunConfig, out: &Path) -> CliResult<i32> {
    let model = cfg.model()?;
    let mut art = Artifacts::new(out)?;
    let (label, est) = estimate_cost(cfg, &model, &mut art)?;
    println!("J = {} ± {}", est.value, est.standard_error);
    art.append_row(
        "cost.csv",
        "model,method,t,x,paths,steps,seed,value,standard_error",
        &format!(
            "{},{},{},{},{},{},{},{},{}",
            model.name(),
            label,
            cfg.point.t,
            cfg.point.x,
            cfg.mc.paths,
            cfg.mc.steps,
            cfg.mc.seed,
            est.value,
            est.standard_error
        ),
    )?;
    art.finish("cost", cfg)?;
    Ok(EXIT_PASS)
}

fn write_report(art: &mut Artifacts, stem: &str, report: &VerificationReport) -> CliResult<()> {
    art.write_json(&format!("{stem}.json"), report)?;
    art.write(&format!("{stem}.txt"), report.to_string().as_bytes())?;
    print!("{report}");
    Ok(())
}

fn run_verify(cfg: &RunConfig, model: &ControlModel, art: &mut Artifacts) -> CliResult<VerificationReport> {
    let (t, x) = (cfg.point.t, cfg.point.x);
    let v = &cfg.verify;
    let surface = art.timed("hjb", || value_surface(cfg, model, &cfg.grid()?))?;
    let fields = || match v.triple {
        Some([q, p, pp]) => TripleFields::constant(*surface.grid(), q, p, pp),
        None => TripleFields::from_surface(&surface),
    };
    let report = match v.mode {
        VerifyMode::Classical => {
            let law = feedback_law(v.law, v.law_value, &surface, model)?;
            let battery = control_battery(model, t, cfg.mc.battery_random, cfg.mc.battery_switches, cfg.mc.seed);
            let reg = check_d1_d2(&surface, v.delta)?;
            art.write_json("regularity.json", &reg)?;
            art.timed("verify", || {
                verify_classical(model, &surface, t, x, &law, &battery, &cfg.mc)
            })?
        }
        VerifyMode::Viscosity => {
            let f = fields();
            let control = OpenLoopControl::Constant(vec![v.control]);
            let candidate = move |s: f64, y: f64| f.eval(s, y);
            art.timed("verify", || {
                verify_viscosity_conditions(model, &surface, t, x, &control, &candidate, &cfg.mc)
            })?
        }
        VerifyMode::Feedback => {
            let law = feedback_law(v.law, v.law_value, &surface, model)?;
            let f = fields();
            art.timed("verify", || {
                verify_feedback_optimality(model, &surface, &law, &f, t, x, &cfg.mc)
            })?
        }
    };
    Ok(report)
}

pub fn verify(cfg: &RunConfig, out: &Path) -> CliResult<i32> {
    let model = cfg.model()?;
    let mut art = Artifacts::new(out)?;
    let report = run_verify(cfg, &model, &mut art)?;
    write_report(&mut art, "report", &report)?;
    art.note("verdict", report.verdict.to_string());
    art.finish("verify", cfg)?;
    Ok(verdict_exit(report.passed()))
}

pub fn assumptions(cfg: &RunConfig, out: &Path) -> CliResult<i32> {
    let model = cfg.model()?;
    let probe = match &cfg.assumptions.probe {
        Some(p) => p.clone(),
        None => {
            let g = cfg.grid()?;
            ProbeBox::new((0.0, model.horizon()), vec![(g.x_lo(), g.x_hi())], None)
        }
    };
    let mut art = Artifacts::new(out)?;
    let report = art.timed("assumptions", || {
        validate_assumptions(&model, &probe, cfg.assumptions.seed)
    })?;
    art.write_json("assumptions.json", &report)?;
    for e in &report.entries {
        println!("{:<4} {:?}", e.name, e.status);
    }
    let pass = report.all_measured_pass();
    art.note("all_measured_pass", pass.to_string());
    art.finish("assumptions", cfg)?;
    Ok(verdict_exit(pass))
}

#[derive(Serialize)]
struct SummaryRow {
    quantity: String,
    value: f64,
    expected: String,
    pass: Option<bool>,
}

#[derive(Default)]
struct Summary(Vec<SummaryRow>);

impl Summary {
    fn push(&mut self, quantity: &str, value: f64, expected: &str, pass: Option<bool>) {
        self.0.push(SummaryRow {
            quantity: quantity.into(),
            value,
            expected: expected.into(),
            pass,
        });
    }

    fn passed(&self) -> bool {
        self.0.iter().all(|r| r.pass != Some(false))
    }

    fn csv(&self) -> String {
        let mut s = String::from("quantity,value,expected,pass\n");
        for r in &self.0 {
            let pass = r.pass.map_or(String::new(), |p| p.to_string());
            let _ = writeln!(s, "{},{},{},{}", r.quantity, r.value, r.expected, pass);
        }
        s
    }

    fn table(&self) -> String {
        let mut s = String::new();
        for r in &self.0 {
            let mark = match r.pass {
                Some(true) => "ok  ",
                Some(false) => "FAIL",
                None => "    ",
            };
            let _ = writeln!(s, "{mark} {:<40} {:>14.6e}  {}", r.quantity, r.value, r.expected);
        }
        s
    }
}

fn resolve_bundle(id: &str) -> CliResult<&'static str> {
    BUNDLES.iter().find(|(k, _)| *k == id).map(|(_, m)| *m).ok_or_else(|| {
        let ids: Vec<&str> = BUNDLES.iter().map(|(k, _)| *k).collect();
        CliError::config(format!("unknown bundle id '{id}' (valid ids: {})", ids.join(", ")))
    })
}

/// Full reproduction bundle for one of the two closed-form examples.
pub fn paper(base: &RunConfig, id: &str, out: &Path) -> CliResult<i32> {
    let model_name = resolve_bundle(id)?;
    let mut cfg = base.clone();
    cfg.model = model_name.into();
    cfg.surface = "computed".into();
    cfg.check()?;
    let model = cfg.model()?;
    let horizon = model.horizon();
    let mut art = Artifacts::new(out)?;
    let mut summary = Summary::default();

    let solved = run_solve(&cfg, &model, &mut art)?;
    let surface = &solved;

    let pass = if model_name == "example-classical" {
        let (err, et, ex) = relative_error(surface, |t, x| classical_value(horizon, t, x), |_| true);
        summary.push("hjb max relative error", err, "<= 1e-2", Some(err <= 1e-2));
        art.note("hjb_worst_node", format!("t = {et}, x = {ex}"));

        cfg.point.t = 0.0;
        cfg.point.x = 1.0;
        let exact = classical_value(horizon, 0.0, 1.0);
        cfg.cost.method = CostMethod::Mc;
        cfg.cost.control = 0.0;
        let (_, mc) = estimate_cost(&cfg, &model, &mut art)?;
        summary.push("J(0,1; u=0) monte carlo", mc.value, &format!("{exact:.6}"), None);
        summary.push("J(0,1; u=0) standard error", mc.standard_error, "", None);
        cfg.cost.method = CostMethod::Tree;
        let (_, tree) = estimate_cost(&cfg, &model, &mut art)?;
        let gap = (tree.value - exact).abs() / exact;
        summary.push("J(0,1; u=0) tree relative gap", gap, "<= 2e-2", Some(gap <= 2e-2));

        cfg.verify.mode = VerifyMode::Classical;
        cfg.verify.law = LawSource::Extracted;
        let report = run_verify(&cfg, &model, &mut art)?;
        write_report(&mut art, "report", &report)?;
        for c in &report.conditions {
            summary.push(
                &format!("classical condition {} slack", c.name),
                c.slack,
                &format!("<= {:e}", c.tolerance),
                Some(c.verdict == rfbsde_core::Verdict::Pass),
            );
        }
        let reg = check_d1_d2(surface, cfg.verify.delta)?;
        summary.push("D1 constant", reg.c1, "finite", Some(reg.d1_finite));
        summary.push("D2 constant", reg.c2, "finite", Some(reg.d2_pass));
        art.write_json("regularity.json", &reg)?;
        report.passed() && summary.passed()
    } else {
        let band = 3.0 * surface.grid().dx();
        let (err, et, ex) = relative_error(
            surface,
            |t, x| viscosity_value(horizon, t, x),
            |x| x.abs() > band + 1e-12,
        );
        summary.push("hjb max relative error off the kink", err, "<= 2e-2", Some(err <= 2e-2));
        art.note("hjb_worst_node", format!("t = {et}, x = {ex}"));

        let probe = &cfg.mc.membership;
        for (pp, want) in [(0.0, Membership::Member), (-1.0, Membership::NonMember)] {
            let cand = SuperdiffCandidate::new(0.0, 0.0, 0.0, 1.0, pp);
            let r = check_membership(surface, &cand, probe, ProbeKind::Right, Side::Super);
            summary.push(
                &format!("membership margin of (0, 1, {pp})"),
                r.margin,
                &format!("{want:?}"),
                Some(r.verdict == want),
            );
        }

        cfg.point.t = 0.0;
        cfg.point.x = 0.0;
        cfg.verify.mode = VerifyMode::Viscosity;
        cfg.verify.triple = Some([0.0, 1.0, 0.0]);
        cfg.verify.control = 1.0;
        let report = run_verify(&cfg, &model, &mut art)?;
        write_report(&mut art, "report", &report)?;
        for c in &report.conditions {
            summary.push(
                &format!("viscosity condition {} slack", c.name),
                c.slack,
                &format!("<= {:e}", c.tolerance),
                Some(c.verdict == rfbsde_core::Verdict::Pass),
            );
        }
        let reg = check_d1_d2(surface, cfg.verify.delta)?;
        summary.push("D1 constant", reg.c1, "finite", Some(reg.d1_finite));
        summary.push("D2 constant", reg.c2, "finite", Some(reg.d2_pass));
        summary.push(
            "kink second difference",
            reg.kink_second_difference,
            "<= 0",
            Some(reg.kink_second_difference <= 0.0),
        );
        art.write_json("regularity.json", &reg)?;
        report.passed() && summary.passed()
    };

    art.write("summary.csv", summary.csv().as_bytes())?;
    let table = summary.table();
    art.write("summary.txt", table.as_bytes())?;
    print!("{table}");
    art.note("bundle", id.to_string());
    art.finish("paper", &cfg)?;
    Ok(verdict_exit(pass))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundle_ids_resolve() {
        assert_eq!(resolve_bundle("5.2").unwrap(), "example-viscosity");
        let err = resolve_bundle("6.1").unwrap_err();
        assert_eq!(err.exit, crate::error::EXIT_CONFIG);
        assert!(err.message.contains("5.1"));
    }

    #[test]
    fn summary_marks_failures() {
        let mut s = Summary::default();
        s.push("a", 1.0, "", None);
        assert!(s.passed());
        s.push("b", 2.0, "<= 1", Some(false));
        assert!(!s.passed());
        assert!(s.csv().starts_with("quantity,value,expected,pass\na,1,,\n"));
    }
}
