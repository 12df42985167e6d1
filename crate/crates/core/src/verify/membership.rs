//! Sampled tests of second-order parabolic super- and subdifferential
//! membership.
//!
//! For a triple `(q, p, P)` at `(t, x)` the quotient
//!
//! ```text
//! [w(s, y) − w(t, x) − q(s − t) − p(y − x) − ½P(y − x)²] / (|s − t| + |y − x|²)
//! ```
//!
//! is maximised over samples with `|s − t| ≤ ρ`, `|y − x| ≤ √ρ` for a
//! geometric sequence of radii. The limsup is then estimated by fitting
//! `m(ρ) ≈ a + c√ρ + dρ` with `c ≥ 0` and reading off the intercept `a`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hjb::{inf_hamiltonian1, ValueSurface};
use crate::model::ControlModel;

/// Candidate element `(q, p, P)` of a second-order differential at `(t, x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SuperdiffCandidate {
    pub t: f64,
    pub x: f64,
    /// `q`, the time component.
    pub time_rate: f64,
    /// `p`, the first-order space component.
    pub slope: f64,
    /// `P`, the second-order space component.
    pub curvature: f64,
}

impl SuperdiffCandidate {
    pub fn new(t: f64, x: f64, time_rate: f64, slope: f64, curvature: f64) -> Self {
        Self {
            t,
            x,
            time_rate,
            slope,
            curvature,
        }
    }
}

/// Time neighbourhood used by the probe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeKind {
    /// `s ∈ (t, t + ρ]`.
    Right,
    /// `s ∈ [t − ρ, t + ρ]`.
    TwoSided,
}

/// Super- (`limsup ≤ 0`) or sub- (`liminf ≥ 0`) differential.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Super,
    Sub,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Membership {
    Member,
    NonMember,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MembershipProbe {
    /// Largest radius; shrunk when the neighbourhood leaves the surface box.
    pub rho_max: f64,
    pub radii: usize,
    /// Ratio between consecutive radii.
    pub ratio: f64,
    /// Random samples per radius on top of the fixed pattern.
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for MembershipProbe {
    fn default() -> Self {
        Self {
            rho_max: 5e-3,
            radii: 8,
            ratio: 0.5,
            samples: 64,
            seed: 0,
            tol: 1e-2,
        }
    }
}

impl MembershipProbe {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho_max > 0.0 && self.ratio > 0.0 && self.ratio < 1.0 && self.tol >= 0.0) {
            return Err(Error::InvalidInput(
                "membership probe needs rho_max > 0, 0 < ratio < 1, tol >= 0".into(),
            ));
        }
        if self.radii < 4 {
            return Err(Error::InvalidInput(format!(
                "membership probe needs at least 4 radii, got {}",
                self.radii
            )));
        }
        Ok(())
    }

    /// Unit offsets `(θ, φ)`: `s − t = θρ`, `y − x = φ√ρ`.
    fn pattern(&self, kind: ProbeKind) -> Vec<(f64, f64)> {
        let thetas = [1e-3, 0.1, 0.25, 0.5, 1.0];
        let phis = [-1.0, -0.5, -0.25, 0.0, 0.25, 0.5, 1.0];
        let mut out: Vec<(f64, f64)> = thetas.iter().flat_map(|&a| phis.iter().map(move |&b| (a, b))).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        out.extend((0..self.samples).map(|_| {
            let theta: f64 = 1.0 - rng.random::<f64>();
            (theta, rng.random_range(-1.0..=1.0))
        }));
        if kind == ProbeKind::TwoSided {
            let mirrored: Vec<_> = out.iter().map(|&(a, b)| (-a, b)).collect();
            out.extend(mirrored);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MembershipResult {
    pub verdict: Membership,
    /// Fitted intercept `a`: the estimated limsup.
    pub margin: f64,
    /// Fitted coefficient of `√ρ`.
    pub slope: f64,
    /// `(ρ, max quotient)` per radius.
    pub quotients: Vec<(f64, f64)>,
    pub note: String,
}

/// Right-time superdifferential test.
pub fn check_superdiff_membership(
    surface: &ValueSurface,
    cand: &SuperdiffCandidate,
    probe: &MembershipProbe,
) -> MembershipResult {
    check_membership(surface, cand, probe, ProbeKind::Right, Side::Super)
}

pub fn check_membership(
    surface: &ValueSurface,
    cand: &SuperdiffCandidate,
    probe: &MembershipProbe,
    kind: ProbeKind,
    side: Side,
) -> MembershipResult {
    let g = surface.grid();
    let (t, x) = (cand.t, cand.x);
    let inconclusive = |note: String| MembershipResult {
        verdict: Membership::Inconclusive,
        margin: f64::NAN,
        slope: f64::NAN,
        quotients: Vec::new(),
        note,
    };
    if !g.contains(t, x) {
        return inconclusive(format!("({t}, {x}) lies outside the surface box"));
    }
    let room_t = match kind {
        ProbeKind::Right => g.horizon() - t,
        ProbeKind::TwoSided => (g.horizon() - t).min(t),
    };
    let room_x = (x - g.x_lo()).min(g.x_hi() - x);
    let rho0 = probe.rho_max.min(room_t).min(room_x * room_x);
    if !(rho0 > 0.0) {
        return inconclusive("no room for a neighbourhood inside the surface box".into());
    }
    let mut note = String::new();
    if rho0 < probe.rho_max {
        note = format!("radii shrunk to start at {rho0:.3e} to stay inside the surface box");
    }
    let sign = match side {
        Side::Super => 1.0,
        Side::Sub => -1.0,
    };
    let w0 = surface.eval(t, x);
    let pattern = probe.pattern(kind);
    let quotients: Vec<(f64, f64)> = (0..probe.radii)
        .map(|k| {
            let rho = rho0 * probe.ratio.powi(k as i32);
            let sq = rho.sqrt();
            let m = pattern
                .iter()
                .map(|&(a, b)| {
                    let (ds, dy) = (a * rho, b * sq);
                    let rem = surface.eval(t + ds, x + dy)
                        - w0
                        - cand.time_rate * ds
                        - cand.slope * dy
                        - 0.5 * cand.curvature * dy * dy;
                    sign * rem / (ds.abs() + dy * dy)
                })
                .fold(
                    f64::NEG_INFINITY,
                    |acc, q| if q.is_nan() { f64::NAN } else { acc.max(q) },
                );
            (rho, m)
        })
        .collect();
    if quotients.iter().any(|(_, m)| !m.is_finite()) {
        return MembershipResult {
            note: "non-finite quotient".into(),
            quotients,
            ..inconclusive(String::new())
        };
    }
    let (a, c, d) = fit_trend(&quotients);
    let (rho_k, m_k) = *quotients.last().expect("at least four radii");
    let s_k = rho_k.sqrt();
    let tol = probe.tol;
    let verdict = if a <= tol && m_k <= tol + c * s_k + d.abs() * rho_k {
        Membership::Member
    } else if a > tol && m_k > tol {
        Membership::NonMember
    } else {
        Membership::Inconclusive
    };
    MembershipResult {
        verdict,
        margin: a,
        slope: c,
        quotients,
        note,
    }
}

/// Least squares `m ≈ a + c√ρ + dρ`, refitted with `c = 0` if the free fit
/// gives a negative `c`.
fn fit_trend(q: &[(f64, f64)]) -> (f64, f64, f64) {
    let solve = |cols: &[fn(f64) -> f64]| -> Vec<f64> {
        let a = DMatrix::from_fn(q.len(), cols.len(), |r, c| cols[c](q[r].0));
        let b = DVector::from_iterator(q.len(), q.iter().map(|p| p.1));
        a.svd(true, true)
            .solve(&b, 1e-14)
            .map(|v| v.iter().copied().collect())
            .unwrap_or_else(|_| vec![f64::NAN; cols.len()])
    };
    let full = solve(&[|_| 1.0, f64::sqrt, |r| r]);
    if full[1] >= 0.0 {
        (full[0], full[1], full[2])
    } else {
        let reduced = solve(&[|_| 1.0, |r| r]);
        (reduced[0], 0.0, reduced[1])
    }
}

/// A triple that passed the membership probe.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidatedTriple {
    candidate: SuperdiffCandidate,
    side: Side,
    margin: f64,
}

impl ValidatedTriple {
    /// Run the right-time probe on `side`; refuse unless the verdict is
    /// `Member`.
    pub fn validate(
        surface: &ValueSurface,
        candidate: SuperdiffCandidate,
        probe: &MembershipProbe,
        side: Side,
    ) -> Result<Self> {
        let r = check_membership(surface, &candidate, probe, ProbeKind::Right, side);
        if r.verdict != Membership::Member {
            return Err(Error::InvalidInput(format!(
                "triple ({}, {}, {}) at ({}, {}) is {:?} of the {:?}differential (margin {})",
                candidate.time_rate,
                candidate.slope,
                candidate.curvature,
                candidate.t,
                candidate.x,
                r.verdict,
                side,
                r.margin
            )));
        }
        Ok(Self {
            candidate,
            side,
            margin: r.margin,
        })
    }

    pub fn candidate(&self) -> &SuperdiffCandidate {
        &self.candidate
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityReport {
    /// `max{W − h, −q − inf_u ℍ(t, x, W, p, P, u)}` per triple.
    pub values: Vec<f64>,
    /// Largest value over superdifferential triples (should be `≤ tol`).
    pub worst_super: f64,
    /// Smallest value over subdifferential triples (should be `≥ −tol`).
    pub worst_sub: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Sub- and supersolution inequalities of the obstacle HJB equation at
/// validated triples.
pub fn check_viscosity_inequalities(
    surface: &ValueSurface,
    model: &ControlModel,
    triples: &[ValidatedTriple],
    tol: f64,
) -> Result<InequalityReport> {
    if !model.is_scalar() {
        return Err(Error::Dimension("viscosity inequalities need a scalar model".into()));
    }
    let values: Vec<f64> = triples
        .iter()
        .map(|v| {
            let c = &v.candidate;
            let w = surface.eval(c.t, c.x);
            let (inf, _) = inf_hamiltonian1(model, c.t, c.x, w, c.slope, c.curvature);
            (w - model.h1(c.t, c.x)).max(-c.time_rate - inf)
        })
        .collect();
    let pick = |side: Side| {
        triples
            .iter()
            .zip(&values)
            .filter(move |(v, _)| v.side == side)
            .map(|(_, &e)| e)
    };
    let worst_super = pick(Side::Super).fold(f64::NEG_INFINITY, f64::max);
    let worst_sub = pick(Side::Sub).fold(f64::INFINITY, f64::min);
    Ok(InequalityReport {
        pass: worst_super <= tol && worst_sub >= -tol,
        values,
        worst_super,
        worst_sub,
        tol,
    })
}
