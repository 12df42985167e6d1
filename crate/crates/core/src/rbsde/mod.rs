//! Backward solvers for the reflected BSDE
//!
//! ```text
//! Y(s) = Φ(X(T)) + ∫_s^T f(r, X, Y, Z, u) dr - (K(T) - K(s)) - ∫_s^T Z dB,
//! Y ≤ h(s, X),   ∫ (h - Y) dK = 0,
//! ```
//!
//! on a simulated [`PathEnsemble`], by projection or by penalization, plus a
//! brute-force binary-tree oracle for scalar problems.

mod tree;

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ControlModel;
use crate::regression::{ConditionalExpectation, Estimator};
use crate::simulate::{simulate_paths, OpenLoopControl, PathEnsemble, TimeGrid};

pub use tree::{tree_oracle, TreeScheme, MAX_TREE_DEPTH};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub estimator: Estimator,
    /// Penalization level used when a caller asks for the penalized scheme
    /// without naming one.
    pub penalty: f64,
    /// Fixed-point sweeps per step for the implicit driver term.
    pub picard_iterations: usize,
    /// Largest relative change `|Δy| / (1 + |y|)` tolerated after the last sweep.
    pub picard_tolerance: f64,
    pub tol_obstacle: f64,
    pub tol_skorokhod: f64,
    /// Bootstrap replicates behind standard errors. With 0 the standard
    /// error is the sample one of the node-1 values, `sd(Y_1)/√M`, which
    /// ignores the regression error at later nodes.
    pub bootstrap: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            estimator: Estimator::default(),
            penalty: 100.0,
            picard_iterations: 3,
            picard_tolerance: 1e-3,
            tol_obstacle: 0.0,
            tol_skorokhod: 1e-8,
            bootstrap: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.estimator.validate()?;
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "penalty level must be positive, got {}",
                self.penalty
            )));
        }
        if self.picard_iterations == 0 {
            return Err(Error::InvalidInput("need at least one Picard iteration".into()));
        }
        if !(self.picard_tolerance > 0.0) || self.tol_obstacle < 0.0 || self.tol_skorokhod < 0.0 {
            return Err(Error::InvalidInput("tolerances must be nonnegative".into()));
        }
        if self.bootstrap == 1 {
            return Err(Error::InvalidInput(
                "bootstrap needs 0 or at least two replicates".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SchemeKind {
    Reflected,
    Penalized { n: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// `max (Y - h)⁺` over paths and nodes.
    pub max_obstacle_violation: f64,
    /// Largest per-path `Σ_i (h_i - Y_i) ΔK_i`.
    pub max_skorokhod_slack: f64,
    /// `max |Y_N - Φ(X_N)|`.
    pub terminal_mismatch: f64,
    pub min_increment: f64,
    /// `max |Y|` over paths and nodes.
    pub sup_abs_y: f64,
    /// Nodes where a singular regression fell back to binning.
    pub regression_fallbacks: Vec<usize>,
}

/// Discrete `(Y, Z, K)` on an ensemble, stored path-major.
#[derive(Clone, Debug)]
pub struct RbsdeSolution {
    grid: TimeGrid,
    paths: usize,
    noise_dim: usize,
    scheme: SchemeKind,
    y: Vec<f64>,
    z: Vec<f64>,
    k: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl RbsdeSolution {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn scheme(&self) -> SchemeKind {
        self.scheme
    }

    pub fn y(&self, m: usize, i: usize) -> f64 {
        self.y[m * (self.steps() + 1) + i]
    }

    /// `Z` on `[r_i, r_{i+1})`, `i = 0..N`.
    pub fn z(&self, m: usize, i: usize) -> &[f64] {
        let d = self.noise_dim;
        let start = (m * self.steps() + i) * d;
        &self.z[start..start + d]
    }

    /// Cumulative reflection `K[m][i] = Σ_{j<i} ΔK_j`.
    pub fn k(&self, m: usize, i: usize) -> f64 {
        self.k[m * (self.steps() + 1) + i]
    }

    /// Estimate of `Y(t)` at the common initial state.
    pub fn initial_value(&self) -> f64 {
        self.y(0, 0)
    }

    /// `path,node,time,Y,Z0..,K` followed by diagnostics as comment lines.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("path,node,time,Y");
        for c in 0..self.noise_dim {
            header.push_str(&format!(",Z{c}"));
        }
        header.push_str(",K");
        writeln!(w, "{header}")?;
        for m in 0..self.paths {
            for i in 0..=self.steps() {
                write!(w, "{m},{i},{},{}", self.grid.node(i), self.y(m, i))?;
                if i < self.steps() {
                    for v in self.z(m, i) {
                        write!(w, ",{v}")?;
                    }
                } else {
                    for _ in 0..self.noise_dim {
                        write!(w, ",")?;
                    }
                }
                writeln!(w, ",{}", self.k(m, i))?;
            }
        }
        let d = &self.diagnostics;
        writeln!(w, "# max_obstacle_violation={}", d.max_obstacle_violation)?;
        writeln!(w, "# max_skorokhod_slack={}", d.max_skorokhod_slack)?;
        writeln!(w, "# terminal_mismatch={}", d.terminal_mismatch)?;
        writeln!(w, "# regression_fallbacks={:?}", d.regression_fallbacks)?;
        Ok(())
    }
}

/// Point estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub standard_error: f64,
}

/// Discretely reflected scheme: `Ỹ_i = Ê_i[Y_{i+1}] + f(r_i, X_i, Y_i, Z_i, u_i)Δ`,
/// `Y_i = min(Ỹ_i, h_i)`, `ΔK_i = (Ỹ_i - h_i)⁺`.
pub fn solve_reflected(model: &ControlModel, ensemble: &PathEnsemble, config: &SolverConfig) -> Result<RbsdeSolution> {
    config.validate()?;
    let all: Vec<usize> = (0..ensemble.paths()).collect();
    let out = backward(model, ensemble, &all, SchemeKind::Reflected, config, true)?;
    Ok(out.into_solution(ensemble, SchemeKind::Reflected))
}

/// Penalized scheme `Y_i = Ê_i[Y_{i+1}] + f(..)Δ - n(Y_i - h_i)⁺Δ`; `K` stays 0.
pub fn solve_penalized(
    model: &ControlModel,
    ensemble: &PathEnsemble,
    n_pen: f64,
    config: &SolverConfig,
) -> Result<RbsdeSolution> {
    config.validate()?;
    if !(n_pen > 0.0 && n_pen.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "penalty level must be positive, got {n_pen}"
        )));
    }
    let scheme = SchemeKind::Penalized { n: n_pen };
    let all: Vec<usize> = (0..ensemble.paths()).collect();
    let out = backward(model, ensemble, &all, scheme, config, true)?;
    Ok(out.into_solution(ensemble, scheme))
}

/// Node-0 value of the reflected scheme with a standard error: the node-1
/// sample error, or with `bootstrap > 0` the spread of backward sweeps over
/// paths resampled with replacement.
pub fn estimate_reflected(model: &ControlModel, ensemble: &PathEnsemble, config: &SolverConfig) -> Result<Estimate> {
    estimate(model, ensemble, SchemeKind::Reflected, config)
}

pub fn estimate_penalized(
    model: &ControlModel,
    ensemble: &PathEnsemble,
    n_pen: f64,
    config: &SolverConfig,
) -> Result<Estimate> {
    estimate(model, ensemble, SchemeKind::Penalized { n: n_pen }, config)
}

fn estimate(
    model: &ControlModel,
    ensemble: &PathEnsemble,
    scheme: SchemeKind,
    config: &SolverConfig,
) -> Result<Estimate> {
    config.validate()?;
    let paths = ensemble.paths();
    let all: Vec<usize> = (0..paths).collect();
    let base = backward(model, ensemble, &all, scheme, config, false)?;
    if config.bootstrap == 0 {
        return Ok(Estimate {
            value: base.value,
            standard_error: base.sample_se,
        });
    }
    let value = base.value;
    let replicates: Vec<f64> = (0..config.bootstrap)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(ensemble.seed() ^ 0x9e37_79b9_7f4a_7c15);
            rng.set_stream(b as u64);
            let idx: Vec<usize> = (0..paths).map(|_| rng.random_range(0..paths)).collect();
            backward(model, ensemble, &idx, scheme, config, false).map(|o| o.value)
        })
        .collect::<Result<_>>()?;
    let n = replicates.len() as f64;
    let mean = replicates.iter().sum::<f64>() / n;
    let var = replicates.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(Estimate {
        value,
        standard_error: var.sqrt(),
    })
}

/// `J(t, x; u) = Y(t)`: simulate, solve the reflected scheme, read node 0.
#[allow(clippy::too_many_arguments)]
pub fn cost_functional(
    model: &ControlModel,
    t: f64,
    x: &[f64],
    control: &OpenLoopControl,
    grid: &TimeGrid,
    paths: usize,
    seed: u64,
    config: &SolverConfig,
) -> Result<Estimate> {
    config.validate()?;
    let ensemble = simulate_paths(model, t, x, control, grid, paths, seed)?;
    estimate_reflected(model, &ensemble, config)
}

struct Outcome {
    value: f64,
    sample_se: f64,
    full: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    diagnostics: Diagnostics,
}

impl Outcome {
    fn into_solution(self, ensemble: &PathEnsemble, scheme: SchemeKind) -> RbsdeSolution {
        let (y, z, k) = self.full.expect("stored run");
        RbsdeSolution {
            grid: *ensemble.grid(),
            paths: ensemble.paths(),
            noise_dim: ensemble.noise_dim(),
            scheme,
            y,
            z,
            k,
            diagnostics: self.diagnostics,
        }
    }
}

/// Solve the one-step implicit equation at a single path.
///
/// Reflected: `y = min(e + f(y)Δ, h)`. Penalized: `y = e + f(y)Δ - n(y - h)⁺Δ`,
/// where for fixed `v = e + f(y)Δ` the penalty part has the closed form
/// `v` if `v ≤ h`, else `(v + nΔh) / (1 + nΔ)`.
/// Returns `(y, ΔK, converged change)`.
fn implicit_step(
    scheme: SchemeKind,
    e: f64,
    h: f64,
    dt: f64,
    iterations: usize,
    tol: f64,
    f: impl Fn(f64) -> f64,
) -> (f64, f64, Option<f64>) {
    let settle = |v: f64| -> f64 {
        match scheme {
            SchemeKind::Reflected => v.min(h),
            SchemeKind::Penalized { n } => {
                if v <= h {
                    v
                } else {
                    (v + n * dt * h) / (1.0 + n * dt)
                }
            }
        }
    };
    let mut y = settle(e);
    let mut raw = e;
    let mut change = f64::INFINITY;
    for _ in 0..iterations {
        raw = e + f(y) * dt;
        let next = settle(raw);
        change = (next - y).abs();
        y = next;
        if change == 0.0 {
            break;
        }
    }
    let dk = match scheme {
        SchemeKind::Reflected if raw > h => raw - h,
        _ => 0.0,
    };
    let failed = (change > tol * (1.0 + y.abs())).then_some(change);
    (y, dk, failed)
}

fn backward(
    model: &ControlModel,
    ens: &PathEnsemble,
    idx: &[usize],
    scheme: SchemeKind,
    config: &SolverConfig,
    store: bool,
) -> Result<Outcome> {
    let (n, d) = (ens.state_dim(), ens.noise_dim());
    if n != model.state_dim() || d != model.noise_dim() || ens.control_dim() != model.control_dim() {
        return Err(Error::Dimension(format!(
            "ensemble is (n, d, m) = ({n}, {d}, {}), model is ({}, {}, {})",
            ens.control_dim(),
            model.state_dim(),
            model.noise_dim(),
            model.control_dim()
        )));
    }
    let steps = ens.steps();
    let grid = *ens.grid();
    let dt = grid.dt();
    let rows = idx.len();
    let paths_stored = if store { rows } else { 0 };

    let mut y_all = vec![0.0; paths_stored * (steps + 1)];
    let mut z_all = vec![0.0; paths_stored * steps * d];
    let mut k_all = vec![0.0; paths_stored * (steps + 1)];
    let mut diag = Diagnostics {
        min_increment: f64::INFINITY,
        ..Diagnostics::default()
    };

    // Terminal layer.
    let t_end = grid.t1();
    let mut y_next: Vec<f64> = idx.iter().map(|&m| model.terminal(ens.state(m, steps))).collect();
    for (j, &m) in idx.iter().enumerate() {
        let y = y_next[j];
        if !y.is_finite() {
            return Err(Error::NonFinite {
                what: "terminal value".into(),
                location: format!("path {m}"),
            });
        }
        let h = model.obstacle(t_end, ens.state(m, steps));
        diag.max_obstacle_violation = diag.max_obstacle_violation.max((y - h).max(0.0));
        diag.sup_abs_y = diag.sup_abs_y.max(y.abs());
        if store {
            y_all[j * (steps + 1) + steps] = y;
        }
    }

    // ΔK accumulated backward: K(T) - K(r_i). Converted to K[i] at the end.
    let mut k_tail = vec![0.0; rows];
    let mut skorokhod = vec![0.0; rows];
    let mut features = vec![0.0; rows * n];
    let mut target = vec![0.0; rows];
    let mut ey = vec![0.0; rows];
    let mut ez = vec![0.0; rows * d];
    let mut proj = vec![0.0; rows];

    let mut sample_se = 0.0;
    for i in (0..steps).rev() {
        let r = grid.node(i);
        if i == 0 && rows > 1 {
            let mean = y_next.iter().sum::<f64>() / rows as f64;
            let var = y_next.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (rows - 1) as f64;
            sample_se = (var / rows as f64).sqrt();
        }
        for (j, &m) in idx.iter().enumerate() {
            features[j * n..(j + 1) * n].copy_from_slice(ens.state(m, i));
        }
        let ce = ConditionalExpectation::fit(&features, n, config.estimator);
        if ce.fell_back() {
            diag.regression_fallbacks.push(i);
        }
        ce.project(&y_next, &mut ey);
        // Centring by E[Y_{i+1} | X_i] leaves the projection unchanged in
        // expectation and removes most of its variance.
        for c in 0..d {
            for (j, &m) in idx.iter().enumerate() {
                target[j] = (y_next[j] - ey[j]) * ens.increment(m, i)[c];
            }
            ce.project(&target, &mut proj);
            for j in 0..rows {
                ez[j * d + c] = proj[j] / dt;
            }
        }

        let results: Vec<(f64, f64, f64, Option<f64>)> = (0..rows)
            .into_par_iter()
            .map(|j| {
                let m = idx[j];
                let x = ens.state(m, i);
                let u = ens.control(m, i);
                let z = &ez[j * d..(j + 1) * d];
                let h = model.obstacle(r, x);
                let (y, dk, failed) = implicit_step(
                    scheme,
                    ey[j],
                    h,
                    dt,
                    config.picard_iterations,
                    config.picard_tolerance,
                    |y| model.driver(r, x, y, z, u),
                );
                (y, dk, h, failed)
            })
            .collect();

        for (j, &(y, dk, h, failed)) in results.iter().enumerate() {
            if let Some(change) = failed {
                return Err(Error::FixedPointNotConverged { step: i, change });
            }
            if !y.is_finite() {
                return Err(Error::NonFinite {
                    what: "Y".into(),
                    location: format!("path {}, node {i}", idx[j]),
                });
            }
            if h.is_finite() || dk > 0.0 {
                skorokhod[j] += (h - y) * dk;
            }
            k_tail[j] += dk;
            diag.min_increment = diag.min_increment.min(dk);
            diag.max_obstacle_violation = diag.max_obstacle_violation.max((y - h).max(0.0));
            diag.sup_abs_y = diag.sup_abs_y.max(y.abs());
            y_next[j] = y;
            if store {
                let row = j * (steps + 1);
                y_all[row + i] = y;
                // Stash K(T) - K(r_i) for now.
                k_all[row + i] = k_tail[j];
                let zs = (j * steps + i) * d;
                z_all[zs..zs + d].copy_from_slice(&ez[j * d..(j + 1) * d]);
            }
        }
    }

    diag.max_skorokhod_slack = skorokhod.iter().fold(0.0, |a, &s| a.max(s));
    if store {
        // K[i] = Σ_{j<i} ΔK_j = (K(T) - K(0)) - (K(T) - K(r_i)).
        for j in 0..rows {
            let row = &mut k_all[j * (steps + 1)..(j + 1) * (steps + 1)];
            let total = row[0];
            row[steps] = 0.0;
            for v in row.iter_mut() {
                *v = total - *v;
            }
            row[0] = 0.0;
        }
        let last = steps;
        for (j, &m) in idx.iter().enumerate() {
            let y = y_all[j * (steps + 1) + last];
            let phi = model.terminal(ens.state(m, last));
            diag.terminal_mismatch = diag.terminal_mismatch.max((y - phi).abs());
        }
    }
    if steps == 0 {
        diag.min_increment = 0.0;
    }
    let value = y_next.iter().sum::<f64>() / rows as f64;
    Ok(Outcome {
        value,
        sample_se,
        full: store.then_some((y_all, z_all, k_all)),
        diagnostics: diag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::examples::{example_classical, example_viscosity, linear_inert, zero_model, ExampleConfig};

    fn cfg() -> ExampleConfig {
        ExampleConfig::default()
    }

    fn ensemble(model: &ControlModel, x: f64, u: f64, steps: usize, paths: usize, seed: u64) -> PathEnsemble {
        let g = TimeGrid::new(0.0, model.horizon(), steps).unwrap();
        simulate_paths(model, 0.0, &[x], &OpenLoopControl::constant(u), &g, paths, seed).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let m = zero_model(&cfg()).unwrap();
        let e = ensemble(&m, 0.3, 0.5, 20, 200, 1);
        for sol in [
            solve_reflected(&m, &e, &SolverConfig::default()).unwrap(),
            solve_penalized(&m, &e, 10.0, &SolverConfig::default()).unwrap(),
        ] {
            for p in 0..200 {
                for i in 0..=20 {
                    assert_eq!(sol.y(p, i), 0.0);
                    assert_eq!(sol.k(p, i), 0.0);
                }
                for i in 0..20 {
                    assert_eq!(sol.z(p, i), &[0.0]);
                }
            }
        }
    }

    #[test]
    fn viscosity_origin_is_exactly_zero() {
        let m = example_viscosity(&cfg()).unwrap();
        let e = ensemble(&m, 0.0, 1.0, 50, 100, 3);
        let sol = solve_reflected(&m, &e, &SolverConfig::default()).unwrap();
        assert!(sol.y.iter().chain(&sol.z).chain(&sol.k).all(|&v| v == 0.0));
    }

    #[test]
    fn inert_linear_model_follows_backward_ode() {
        let m = linear_inert(&cfg()).unwrap();
        let steps = 400;
        let e = ensemble(&m, 1.0, 0.0, steps, 50, 2);
        let sol = solve_reflected(&m, &e, &SolverConfig::default()).unwrap();
        // implicit Euler: Y_0 = (1 - Δ)^{-N}
        let dt = 1.0 / steps as f64;
        let exact_scheme = (1.0 - dt).powi(-(steps as i32));
        assert!((sol.initial_value() - exact_scheme).abs() < 1e-6);
        assert!((sol.initial_value() - 1f64.exp()).abs() < 5e-3);
        assert!(sol.k.iter().all(|&k| k == 0.0));
    }

    #[test]
    fn terminal_condition_is_exact_and_k_monotone() {
        let m = example_classical(&cfg()).unwrap();
        let e = ensemble(&m, 1.0, 0.0, 40, 2000, 5);
        let sol = solve_reflected(&m, &e, &SolverConfig::default()).unwrap();
        for p in 0..2000 {
            assert_eq!(sol.y(p, 40), e.state1(p, 40));
            assert_eq!(sol.k(p, 0), 0.0);
            for i in 0..40 {
                assert!(sol.k(p, i + 1) >= sol.k(p, i));
            }
        }
        assert_eq!(sol.diagnostics.max_obstacle_violation, 0.0);
        assert_eq!(sol.diagnostics.terminal_mismatch, 0.0);
        assert!(sol.diagnostics.min_increment >= 0.0);
    }

    #[test]
    fn penalization_decreases_in_level() {
        let m = example_classical(&cfg()).unwrap();
        let e = ensemble(&m, 1.0, 0.0, 50, 4000, 11);
        let c = SolverConfig::default();
        let vals: Vec<f64> = [1.0, 10.0, 100.0, 1000.0]
            .iter()
            .map(|&n| solve_penalized(&m, &e, n, &c).unwrap().initial_value())
            .collect();
        for w in vals.windows(2) {
            assert!(w[1] <= w[0], "{vals:?}");
        }
        let refl = solve_reflected(&m, &e, &c).unwrap().initial_value();
        assert!(vals[3] >= refl - 1e-9);
    }

    #[test]
    fn implicit_step_closed_forms() {
        let (y, dk, fail) = implicit_step(SchemeKind::Reflected, 2.0, 1.5, 0.1, 3, 1e-12, |_| 0.0);
        assert_eq!((y, dk, fail), (1.5, 0.5, None));
        let n = 10.0;
        let (y, dk, _) = implicit_step(SchemeKind::Penalized { n }, 2.0, 1.5, 0.1, 3, 1e-12, |_| 0.0);
        assert!((y - (2.0 + n * 0.1 * 1.5) / (1.0 + n * 0.1)).abs() < 1e-15);
        assert_eq!(dk, 0.0);
        let (_, _, fail) = implicit_step(SchemeKind::Reflected, 1.0, f64::INFINITY, 0.5, 2, 1e-12, |y| 1.9 * y);
        assert!(fail.is_some());
    }

    #[test]
    fn picard_failure_names_step() {
        let m = linear_inert(&cfg()).unwrap();
        let e = ensemble(&m, 1.0, 0.0, 4, 10, 2);
        let c = SolverConfig {
            picard_iterations: 1,
            ..SolverConfig::default()
        };
        assert!(matches!(
            solve_reflected(&m, &e, &c),
            Err(Error::FixedPointNotConverged { step: 3, .. })
        ));
    }

    #[test]
    fn classical_cost_near_closed_form() {
        let m = example_classical(&cfg()).unwrap();
        let g = TimeGrid::new(0.0, 1.0, 100).unwrap();
        let est = cost_functional(
            &m,
            0.0,
            &[1.0],
            &OpenLoopControl::constant(0.0),
            &g,
            20_000,
            7,
            &SolverConfig::default(),
        )
        .unwrap();
        let target = 2f64.exp();
        assert!(est.standard_error > 0.0 && est.standard_error < 0.1);
        assert!((est.value - target).abs() < 3.0 * est.standard_error + 0.1, "{est:?}");
    }

    #[test]
    fn estimate_is_deterministic() {
        let m = example_classical(&cfg()).unwrap();
        let e = ensemble(&m, 1.0, 0.5, 20, 500, 4);
        let a = estimate_reflected(&m, &e, &SolverConfig::default()).unwrap();
        let b = estimate_reflected(&m, &e, &SolverConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_appends_diagnostics() {
        let m = zero_model(&cfg()).unwrap();
        let e = ensemble(&m, 0.0, 0.0, 2, 1, 0);
        let sol = solve_reflected(&m, &e, &SolverConfig::default()).unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("path,node,time,Y,Z0,K\n0,0,0,0,0,0\n"));
        assert!(text.contains("# max_skorokhod_slack=0"));
    }
}
