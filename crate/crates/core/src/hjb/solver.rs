//! Backward finite-difference solver for
//! `max{W - h, -W_t - inf_u H(t, x, W, W_x, W_xx, u)} = 0`, `W(T, ·) = Φ`.
//!
//! Each step first advances the unconstrained equation and then enforces the
//! upper obstacle, by projection `min(·, h)` or by an implicit penalty.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hamiltonian::inf_hamiltonian1;
use super::surface::{Provenance, ValueSurface};
use super::SpaceTimeGrid;
use crate::banded::BandedMatrix;
use crate::error::{Error, Result};
use crate::model::ControlModel;

/// Stencil tap `(column offset, weight)`.
type Tap = (usize, f64);

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Forward Euler in time with central differences in space.
    #[default]
    Explicit,
    /// Implicit Euler in time; the control is found by Howard's policy
    /// iteration and the driver is lagged by one iteration.
    PolicyIteration,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryRule {
    /// Edge nodes follow the equation with second-order one-sided
    /// differences.
    #[default]
    OneSided,
    /// Edge nodes are linear extrapolations of their two inner neighbours.
    LinearExtrapolation,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObstacleMode {
    #[default]
    Projection,
    /// Replace the constraint by the term `-n (W - h)⁺`, taken implicitly.
    Penalty { n: f64 },
}

/// Time substeps per grid row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Substeps {
    Fixed(usize),
    /// Smallest count meeting the explicit stability bound.
    Auto,
}

impl Default for Substeps {
    fn default() -> Self {
        Self::Fixed(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HjbOptions {
    pub scheme: Scheme,
    pub boundary: BoundaryRule,
    pub obstacle: ObstacleMode,
    pub substeps: Substeps,
    /// Safety factor `c` in `Δt ≤ c Δx² / max(σ² + Δx|b|)`.
    pub stability_factor: f64,
    pub policy_max_iterations: usize,
    pub policy_tolerance: f64,
}

impl Default for HjbOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::Explicit,
            boundary: BoundaryRule::OneSided,
            obstacle: ObstacleMode::Projection,
            substeps: Substeps::Fixed(1),
            stability_factor: 1.0,
            policy_max_iterations: 50,
            policy_tolerance: 1e-10,
        }
    }
}

/// Largest explicit time step `c min Δx² / (σ² + Δx|b|)` over grid rows,
/// columns and grid controls; `+∞` when there is no diffusion or drift.
pub fn explicit_step_limit(model: &ControlModel, grid: &SpaceTimeGrid, factor: f64) -> f64 {
    let dx = grid.dx();
    let mut worst = 0.0f64;
    for i in 0..=grid.nt() {
        let t = grid.t(i);
        for j in 0..=grid.nx() {
            let x = grid.x(j);
            for u in model.control_set().iter() {
                let s = model.sigma1(t, x, u[0]);
                let b = model.b1(t, x, u[0]);
                worst = worst.max(s * s + dx * b.abs());
            }
        }
    }
    if worst == 0.0 {
        f64::INFINITY
    } else {
        factor * dx * dx / worst
    }
}

pub fn solve_obstacle_hjb(model: &ControlModel, grid: &SpaceTimeGrid, options: &HjbOptions) -> Result<ValueSurface> {
    if !model.is_scalar() || model.control_dim() != 1 {
        return Err(Error::Dimension(
            "the finite-difference solver handles scalar state, noise and control".into(),
        ));
    }
    if (grid.horizon() - model.horizon()).abs() > 1e-12 * model.horizon() {
        return Err(Error::InvalidInput(format!(
            "grid horizon {} differs from model horizon {}",
            grid.horizon(),
            model.horizon()
        )));
    }
    if grid.nx() < 3 {
        return Err(Error::InvalidInput("solver needs at least 3 state intervals".into()));
    }
    if let ObstacleMode::Penalty { n } = options.obstacle {
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidInput(format!("penalty level must be positive, got {n}")));
        }
    }
    if !(options.stability_factor > 0.0) {
        return Err(Error::InvalidInput("stability factor must be positive".into()));
    }

    let dt = grid.dt();
    let substeps = match (options.scheme, options.substeps) {
        (_, Substeps::Fixed(0)) => return Err(Error::InvalidInput("substep count must be positive".into())),
        (Scheme::Explicit, choice) => {
            let limit = explicit_step_limit(model, grid, options.stability_factor);
            let needed = if limit.is_finite() {
                ((dt / limit) * (1.0 - 1e-12)).ceil().max(1.0) as usize
            } else {
                1
            };
            match choice {
                Substeps::Auto => needed,
                Substeps::Fixed(k) if k >= needed => k,
                Substeps::Fixed(_) => {
                    return Err(Error::StabilityViolation {
                        dt,
                        required: limit,
                        substeps: needed,
                    })
                }
            }
        }
        (Scheme::PolicyIteration, Substeps::Auto) => 1,
        (Scheme::PolicyIteration, Substeps::Fixed(k)) => k,
    };

    let (nt, nx) = (grid.nt(), grid.nx());
    let width = nx + 1;
    let xs: Vec<f64> = (0..=nx).map(|j| grid.x(j)).collect();
    let mut values = vec![0.0; (nt + 1) * width];
    let mut w: Vec<f64> = xs.iter().map(|&x| model.phi1(x)).collect();
    ensure_finite(&w, nt, grid)?;
    values[nt * width..].copy_from_slice(&w);

    let tau = dt / substeps as f64;
    let mut next = vec![0.0; width];
    for i in (0..nt).rev() {
        for s in 0..substeps {
            let t_from = grid.t(i + 1) - tau * s as f64;
            let t_to = if s + 1 == substeps { grid.t(i) } else { t_from - tau };
            match options.scheme {
                Scheme::Explicit => explicit_step(model, grid, &xs, t_from, tau, options.boundary, &w, &mut next),
                Scheme::PolicyIteration => {
                    implicit_step(model, grid, &xs, t_to, tau, options, &w, &mut next).map_err(|e| match e {
                        Error::PolicyIterationNotConverged { .. } => {
                            Error::PolicyIterationNotConverged { time_index: i }
                        }
                        other => other,
                    })?
                }
            }
            apply_obstacle(model, &xs, t_to, tau, options.obstacle, &mut next);
            std::mem::swap(&mut w, &mut next);
        }
        ensure_finite(&w, i, grid)?;
        values[i * width..(i + 1) * width].copy_from_slice(&w);
    }

    let scheme = match options.scheme {
        Scheme::Explicit => format!("explicit(substeps={substeps})"),
        Scheme::PolicyIteration => format!("policy-iteration(substeps={substeps})"),
    };
    ValueSurface::from_values(
        *grid,
        values,
        Provenance::Computed {
            model: model.name().to_string(),
            scheme,
        },
        model.value_kinks().to_vec(),
    )
}

fn ensure_finite(w: &[f64], i: usize, grid: &SpaceTimeGrid) -> Result<()> {
    match w.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(j) => Err(Error::NonFinite {
            what: "value surface".into(),
            location: format!("t = {}, x = {}", grid.t(i), grid.x(j)),
        }),
    }
}

/// First and second differences at column `j`, one-sided at the edges.
#[inline]
fn differences(w: &[f64], j: usize, dx: f64) -> (f64, f64) {
    let nx = w.len() - 1;
    let dx2 = dx * dx;
    if j == 0 {
        (
            (-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * dx),
            (2.0 * w[0] - 5.0 * w[1] + 4.0 * w[2] - w[3]) / dx2,
        )
    } else if j == nx {
        (
            (3.0 * w[nx] - 4.0 * w[nx - 1] + w[nx - 2]) / (2.0 * dx),
            (2.0 * w[nx] - 5.0 * w[nx - 1] + 4.0 * w[nx - 2] - w[nx - 3]) / dx2,
        )
    } else {
        (
            (w[j + 1] - w[j - 1]) / (2.0 * dx),
            (w[j + 1] - 2.0 * w[j] + w[j - 1]) / dx2,
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn explicit_step(
    model: &ControlModel,
    grid: &SpaceTimeGrid,
    xs: &[f64],
    t: f64,
    tau: f64,
    boundary: BoundaryRule,
    w: &[f64],
    out: &mut [f64],
) {
    let dx = grid.dx();
    let nx = grid.nx();
    out.par_iter_mut().with_min_len(64).enumerate().for_each(|(j, o)| {
        let (p, pp) = differences(w, j, dx);
        let (inf, _) = inf_hamiltonian1(model, t, xs[j], w[j], p, pp);
        *o = w[j] + tau * inf;
    });
    if boundary == BoundaryRule::LinearExtrapolation {
        out[0] = 2.0 * out[1] - out[2];
        out[nx] = 2.0 * out[nx - 1] - out[nx - 2];
    }
}

#[allow(clippy::too_many_arguments)]
fn implicit_step(
    model: &ControlModel,
    grid: &SpaceTimeGrid,
    xs: &[f64],
    t: f64,
    tau: f64,
    options: &HjbOptions,
    w: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let dx = grid.dx();
    let nx = grid.nx();
    let n = nx + 1;
    let set = model.control_set();
    let policy_of = |v: &[f64]| -> Vec<usize> {
        (0..n)
            .map(|j| {
                let (p, pp) = differences(v, j, dx);
                inf_hamiltonian1(model, t, xs[j], v[j], p, pp).1
            })
            .collect()
    };

    let mut iterate = w.to_vec();
    let mut policy = policy_of(&iterate);
    for _ in 0..options.policy_max_iterations {
        let mut a = BandedMatrix::zeros(n, 3, 3);
        let mut rhs = vec![0.0; n];
        for j in 0..n {
            let u = set.point(policy[j])[0];
            let x = xs[j];
            let b = model.b1(t, x, u);
            let s = model.sigma1(t, x, u);
            let diff = 0.5 * s * s;
            let (p_lag, _) = differences(&iterate, j, dx);
            let f_lag = model.f1(t, x, iterate[j], p_lag * s, u);
            rhs[j] = w[j] + tau * f_lag;
            let edge = j == 0 || j == nx;
            if edge && options.boundary == BoundaryRule::LinearExtrapolation {
                let (c0, c1, c2) = if j == 0 { (0, 1, 2) } else { (nx, nx - 1, nx - 2) };
                a.set(j, c0, 1.0);
                a.set(j, c1, -2.0);
                a.set(j, c2, 1.0);
                rhs[j] = 0.0;
                continue;
            }
            // Stencils (column offset, weight) for W_x and W_xx.
            let (d1, d2): (Vec<Tap>, Vec<Tap>) = if j == 0 {
                (
                    vec![(0, -1.5 / dx), (1, 2.0 / dx), (2, -0.5 / dx)],
                    vec![(0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)],
                )
            } else if j == nx {
                (
                    vec![(nx, 1.5 / dx), (nx - 1, -2.0 / dx), (nx - 2, 0.5 / dx)],
                    vec![(nx, 2.0), (nx - 1, -5.0), (nx - 2, 4.0), (nx - 3, -1.0)],
                )
            } else {
                (
                    vec![(j + 1, 0.5 / dx), (j - 1, -0.5 / dx)],
                    vec![(j + 1, 1.0), (j, -2.0), (j - 1, 1.0)],
                )
            };
            a.add(j, j, 1.0);
            for (c, wgt) in d1 {
                a.add(j, c, -tau * b * wgt);
            }
            for (c, wgt) in d2 {
                a.add(j, c, -tau * diff * wgt / (dx * dx));
            }
        }
        a.solve_in_place(&mut rhs)?;
        let new_policy = policy_of(&rhs);
        let change = rhs
            .iter()
            .zip(&iterate)
            .map(|(a, b)| (a - b).abs() / (1.0 + a.abs()))
            .fold(0.0, f64::max);
        let stable = new_policy == policy;
        iterate = rhs;
        policy = new_policy;
        if stable && change <= options.policy_tolerance {
            out.copy_from_slice(&iterate);
            return Ok(());
        }
    }
    Err(Error::PolicyIterationNotConverged { time_index: 0 })
}

fn apply_obstacle(model: &ControlModel, xs: &[f64], t: f64, tau: f64, mode: ObstacleMode, w: &mut [f64]) {
    for (v, &x) in w.iter_mut().zip(xs) {
        let h = model.h1(t, x);
        match mode {
            ObstacleMode::Projection => *v = v.min(h),
            ObstacleMode::Penalty { n } => {
                if *v > h {
                    *v = (*v + tau * n * h) / (1.0 + tau * n);
                }
            }
        }
    }
}
