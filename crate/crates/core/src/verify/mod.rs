//! Mechanical checks of verification conditions: the classical comparison
//! against a control battery, superdifferential membership, the viscosity
//! conditions along simulated paths, (D1)/(D2) regularity and feedback
//! optimality.

mod classical;
mod membership;
mod regularity;
mod viscosity;

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ControlModel;
use crate::rbsde::SolverConfig;
use crate::simulate::OpenLoopControl;

pub use classical::verify_classical;
pub use membership::{
    check_membership, check_superdiff_membership, check_viscosity_inequalities, InequalityReport, Membership,
    MembershipProbe, MembershipResult, ProbeKind, Side, SuperdiffCandidate, ValidatedTriple,
};
pub use regularity::{check_d1_d2, RegularityReport};
pub use viscosity::{verify_feedback_optimality, verify_viscosity_conditions, TripleFields};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    fn from_slack(slack: f64, tolerance: f64) -> Self {
        if slack <= tolerance {
            Verdict::Pass
        } else if slack.is_nan() {
            Verdict::Inconclusive
        } else {
            Verdict::Fail
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// One checked condition: the measured slack against its tolerance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionRecord {
    pub name: String,
    pub slack: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub note: String,
}

impl ConditionRecord {
    fn measured(name: &str, slack: f64, tolerance: f64, note: String) -> Self {
        Self {
            name: name.into(),
            slack,
            tolerance,
            verdict: Verdict::from_slack(slack, tolerance),
            note,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    /// Which set of conditions was checked: `classical`, `viscosity` or
    /// `feedback`.
    pub theorem: String,
    pub model: String,
    pub point: (f64, f64),
    pub conditions: Vec<ConditionRecord>,
    pub verdict: Verdict,
    /// Seeds, grids and tolerances the report depends on.
    pub fingerprint: BTreeMap<String, String>,
}

impl VerificationReport {
    fn assemble(
        theorem: &str,
        model: &ControlModel,
        point: (f64, f64),
        conditions: Vec<ConditionRecord>,
        fingerprint: BTreeMap<String, String>,
    ) -> Self {
        let verdict = if conditions.iter().any(|c| c.verdict == Verdict::Fail) {
            Verdict::Fail
        } else if conditions.iter().all(|c| c.verdict == Verdict::Pass) {
            Verdict::Pass
        } else {
            Verdict::Inconclusive
        };
        Self {
            theorem: theorem.into(),
            model: model.name().into(),
            point,
            conditions,
            verdict,
            fingerprint,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionRecord> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} verification of {} at (t, x) = ({}, {}): {}",
            self.theorem, self.model, self.point.0, self.point.1, self.verdict
        )?;
        for c in &self.conditions {
            write!(
                f,
                "  [{}] {:<12} slack {:+.6e}  tol {:.3e}",
                c.verdict, c.name, c.slack, c.tolerance
            )?;
            if !c.note.is_empty() {
                write!(f, "  {}", c.note)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Monte Carlo sizes, seeds and tolerances shared by the path-based checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub steps: usize,
    pub paths: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    /// Absolute allowance for time-discretisation and regression bias in
    /// cost comparisons.
    pub budget: f64,
    /// Relative mean-square tolerance for `p·σ` against the regression `Z`.
    pub tol_z: f64,
    pub membership: MembershipProbe,
    /// Stratified sample of path points for the membership condition.
    pub time_samples: usize,
    pub path_samples: usize,
    /// Required share of conclusive members among sampled points.
    pub member_quota: f64,
    /// Random piecewise-constant controls added to the constant ones.
    pub battery_random: usize,
    pub battery_switches: usize,
    /// Compare `W(t, x)` against the battery in the viscosity checks too.
    pub check_value: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            paths: 10_000,
            seed: 0,
            solver: SolverConfig::default(),
            budget: 0.05,
            tol_z: 0.1,
            membership: MembershipProbe::default(),
            time_samples: 16,
            path_samples: 64,
            member_quota: 0.95,
            battery_random: 20,
            battery_switches: 8,
            check_value: true,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.membership.validate()?;
        if self.steps == 0 || self.paths < 2 || self.time_samples == 0 || self.path_samples == 0 {
            return Err(Error::InvalidInput(
                "steps, sample counts and paths (>= 2) must be positive".into(),
            ));
        }
        if !(self.budget >= 0.0 && self.tol_z >= 0.0) {
            return Err(Error::InvalidInput("tolerances must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.member_quota) {
            return Err(Error::InvalidInput(format!(
                "member quota must lie in [0, 1], got {}",
                self.member_quota
            )));
        }
        Ok(())
    }

    fn fingerprint(&self, t: f64, x: f64) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("t", t.to_string());
        put("x", x.to_string());
        put("steps", self.steps.to_string());
        put("paths", self.paths.to_string());
        put("seed", self.seed.to_string());
        put("budget", self.budget.to_string());
        put("tol_z", self.tol_z.to_string());
        put("membership.tol", self.membership.tol.to_string());
        put("membership.seed", self.membership.seed.to_string());
        put("membership.radii", self.membership.radii.to_string());
        put("membership.rho_max", self.membership.rho_max.to_string());
        put("member_quota", self.member_quota.to_string());
        put("time_samples", self.time_samples.to_string());
        put("path_samples", self.path_samples.to_string());
        put("solver.bootstrap", self.solver.bootstrap.to_string());
        put("solver.estimator", format!("{:?}", self.solver.estimator));
        m
    }
}

/// Test battery standing in for "all admissible controls" on `[t, T]`: every
/// constant control on the grid of `U`, then `random` seeded piecewise-constant
/// schedules with `switches` switch times and values uniform in the box of `U`.
pub fn control_battery(
    model: &ControlModel,
    t: f64,
    random: usize,
    switches: usize,
    seed: u64,
) -> Vec<(String, OpenLoopControl)> {
    let set = model.control_set();
    let mut out: Vec<(String, OpenLoopControl)> = set
        .iter()
        .map(|u| (format!("constant {u:?}"), OpenLoopControl::Constant(u.to_vec())))
        .collect();
    let (lo, hi) = (set.lower(), set.upper());
    let span = model.horizon() - t;
    for k in 0..random {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let mut times: Vec<f64> = (0..switches).map(|_| t + span * rng.random::<f64>()).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        times.insert(0, t);
        let values = times
            .iter()
            .map(|_| {
                lo.iter()
                    .zip(&hi)
                    .map(|(&a, &b)| if b > a { rng.random_range(a..=b) } else { a })
                    .collect()
            })
            .collect();
        out.push((
            format!("random schedule {k}"),
            OpenLoopControl::Schedule {
                switch_times: times,
                values,
            },
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::examples::{example_classical, ExampleConfig};
    use crate::simulate::TimeGrid;

    #[test]
    fn battery_is_admissible_and_seeded() {
        let m = example_classical(&ExampleConfig::default()).unwrap();
        let a = control_battery(&m, 0.0, 20, 8, 5);
        let b = control_battery(&m, 0.0, 20, 8, 5);
        assert_eq!(a.len(), 11 + 20);
        let g = TimeGrid::new(0.0, 1.0, 50).unwrap();
        for ((_, ca), (_, cb)) in a.iter().zip(&b) {
            ca.validate(&m, &g, 10).unwrap();
            assert_eq!(format!("{ca:?}"), format!("{cb:?}"));
        }
        assert_ne!(
            format!("{:?}", control_battery(&m, 0.0, 1, 8, 6)[11].1),
            format!("{:?}", a[11].1)
        );
    }

    #[test]
    fn aggregate_needs_every_condition() {
        let m = example_classical(&ExampleConfig::default()).unwrap();
        let rec = |v: f64| ConditionRecord::measured("c", v, 0.0, String::new());
        let r = VerificationReport::assemble("t", &m, (0.0, 0.0), vec![rec(0.0), rec(-1.0)], BTreeMap::new());
        assert!(r.passed());
        let r = VerificationReport::assemble("t", &m, (0.0, 0.0), vec![rec(0.0), rec(1.0)], BTreeMap::new());
        assert_eq!(r.verdict, Verdict::Fail);
        let r = VerificationReport::assemble("t", &m, (0.0, 0.0), vec![rec(0.0), rec(f64::NAN)], BTreeMap::new());
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }
}
