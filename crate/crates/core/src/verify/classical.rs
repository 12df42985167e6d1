use rayon::prelude::*;

use super::{ConditionRecord, McConfig, VerificationReport};
use crate::error::{Error, Result};
use crate::hjb::ValueSurface;
use crate::model::ControlModel;
use crate::rbsde::{cost_functional, Estimate};
use crate::simulate::{OpenLoopControl, TimeGrid};
use crate::synthesis::{check_law_regularity, evaluate_feedback, FeedbackLaw};

/// Compare a classical value surface with Monte Carlo costs at `(t, x)`.
///
/// * `A`: `W(t, x) ≤ J(t, x; u) + 3·SE + budget` for every battery control.
/// * `B`: `|W(t, x) − J(t, x; law)| ≤ 3·SE + budget`.
/// * `C`: the law is Lipschitz in `x` on the grid (no one-cell jumps).
///
/// All costs share the ensemble seed, so comparisons are paired.
pub fn verify_classical(
    model: &ControlModel,
    surface: &ValueSurface,
    t: f64,
    x: f64,
    law: &FeedbackLaw,
    battery: &[(String, OpenLoopControl)],
    mc: &McConfig,
) -> Result<VerificationReport> {
    mc.validate()?;
    let g = surface.grid();
    if let Some(&k) = surface.kinks().iter().find(|&&k| k >= g.x_lo() && k <= g.x_hi()) {
        return Err(Error::NotClassical { x: k });
    }
    if !g.contains(t, x) || t >= model.horizon() {
        return Err(Error::InvalidInput(format!(
            "(t, x) = ({t}, {x}) must lie in the surface box with t < T"
        )));
    }
    if battery.is_empty() {
        return Err(Error::InvalidInput("control battery is empty".into()));
    }
    let w = surface.eval(t, x);
    let grid = TimeGrid::new(t, model.horizon(), mc.steps)?;

    let costs: Vec<Estimate> = battery
        .par_iter()
        .map(|(_, u)| cost_functional(model, t, &[x], u, &grid, mc.paths, mc.seed, &mc.solver))
        .collect::<Result<_>>()?;
    let (worst, slack_a) = costs
        .iter()
        .map(|e| w - e.value - 3.0 * e.standard_error)
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (k, s)| if s > acc.1 { (k, s) } else { acc },
        );
    let cond_a = ConditionRecord::measured(
        "A",
        slack_a,
        mc.budget,
        format!(
            "W = {w:.6}; tightest control '{}' with J = {:.6} ± {:.2e}",
            battery[worst].0, costs[worst].value, costs[worst].standard_error
        ),
    );

    let unchecked = law.clone().allow_irregular(true);
    let j = evaluate_feedback(model, &unchecked, t, x, &grid, mc.paths, mc.seed, &mc.solver)?;
    let cond_b = ConditionRecord::measured(
        "B",
        (w - j.value).abs() - 3.0 * j.standard_error,
        mc.budget,
        format!("W = {w:.6}, J(law) = {:.6} ± {:.2e}", j.value, j.standard_error),
    );

    let reg = check_law_regularity(law);
    let worst_jump = reg.worst_jump.iter().copied().fold(0.0, f64::max);
    let cond_c = ConditionRecord::measured(
        "C",
        worst_jump - reg.jump_threshold,
        0.0,
        format!(
            "Lipschitz estimate {:.4e}, largest one-cell jump {worst_jump}",
            reg.lipschitz
        ),
    );

    let mut fp = mc.fingerprint(t, x);
    fp.insert("battery".into(), battery.len().to_string());
    fp.insert("surface".into(), format!("{:?}", surface.provenance()));
    fp.insert("law".into(), law.provenance().source.clone());
    Ok(VerificationReport::assemble(
        "classical",
        model,
        (t, x),
        vec![cond_a, cond_b, cond_c],
        fp,
    ))
}
