//! Euler-Maruyama simulation of the controlled state equation.
//!
//! Every path draws its Gaussian increments from its own ChaCha stream
//! `(seed, path)`, so ensembles are bit-identical for a given seed no matter
//! how many worker threads run, and two simulations with the same seed share
//! their Brownian increments path by path.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ControlModel;

/// Uniform grid `t0 = r_0 < ... < r_N = t1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, steps: usize) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite()) || t0 < 0.0 || t1 <= t0 {
            return Err(Error::InvalidInput(format!(
                "time grid needs 0 <= t0 < t1, got [{t0}, {t1}]"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidInput("time grid needs at least one step".into()));
        }
        Ok(Self { t0, t1, steps })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.steps {
            self.t1
        } else {
            self.t0 + self.dt() * i as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|i| self.node(i))
    }
}

/// Deterministic time function `r -> u(r)` written into a buffer.
pub type ControlFn = Arc<dyn Fn(f64, &mut [f64]) + Send + Sync>;

/// Control applied on each interval `[r_i, r_{i+1})`.
#[derive(Clone)]
pub enum OpenLoopControl {
    Constant(Vec<f64>),
    /// Piecewise constant in time: `values[k]` applies from `switch_times[k]`
    /// until the next switch. Before the first switch `values[0]` applies.
    Schedule {
        switch_times: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
    Function(ControlFn),
    /// Per-path, per-node values `values[(m * steps + i) * dim + k]`.
    Table {
        paths: usize,
        steps: usize,
        dim: usize,
        values: Arc<Vec<f64>>,
    },
}

impl fmt::Debug for OpenLoopControl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(u) => f.debug_tuple("Constant").field(u).finish(),
            Self::Schedule { switch_times, values } => f
                .debug_struct("Schedule")
                .field("switch_times", switch_times)
                .field("values", values)
                .finish(),
            Self::Function(_) => f.write_str("Function(..)"),
            Self::Table { paths, steps, dim, .. } => f
                .debug_struct("Table")
                .field("paths", paths)
                .field("steps", steps)
                .field("dim", dim)
                .finish_non_exhaustive(),
        }
    }
}

impl OpenLoopControl {
    pub fn constant(u: f64) -> Self {
        Self::Constant(vec![u])
    }

    pub fn function<F>(f: F) -> Self
    where
        F: Fn(f64, &mut [f64]) + Send + Sync + 'static,
    {
        Self::Function(Arc::new(f))
    }

    /// True when the control does not depend on the path.
    pub fn is_deterministic(&self) -> bool {
        !matches!(self, Self::Table { .. })
    }

    /// Value on `[r, r + Δ)` for a deterministic control.
    pub fn value_at(&self, r: f64, out: &mut [f64]) {
        match self {
            Self::Constant(u) => out.copy_from_slice(u),
            Self::Schedule { switch_times, values } => {
                let k = switch_times.iter().rposition(|&s| s <= r).unwrap_or(0);
                out.copy_from_slice(&values[k]);
            }
            Self::Function(f) => f(r, out),
            Self::Table { .. } => panic!("value_at called on a path-dependent control table"),
        }
    }

    fn value(&self, grid: &TimeGrid, m: usize, i: usize, out: &mut [f64]) {
        match self {
            Self::Table { steps, dim, values, .. } => {
                let start = (m * steps + i) * dim;
                out.copy_from_slice(&values[start..start + dim]);
            }
            _ => self.value_at(grid.node(i), out),
        }
    }

    /// Reject controls of the wrong shape or with values outside `U`.
    pub fn validate(&self, model: &ControlModel, grid: &TimeGrid, paths: usize) -> Result<()> {
        let u_set = model.control_set();
        let dim = u_set.dim();
        let check = |v: &[f64]| -> Result<()> {
            if v.len() != dim {
                return Err(Error::Dimension(format!(
                    "control has {} coordinates, model expects {dim}",
                    v.len()
                )));
            }
            if !u_set.contains(v) {
                return Err(Error::ControlOutsideSet { value: v.to_vec() });
            }
            Ok(())
        };
        match self {
            Self::Constant(u) => check(u),
            Self::Schedule { switch_times, values } => {
                if values.is_empty() || values.len() != switch_times.len() {
                    return Err(Error::InvalidInput("schedule needs one value per switch time".into()));
                }
                if switch_times.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::InvalidInput("switch times must increase".into()));
                }
                values.iter().try_for_each(|v| check(v))
            }
            Self::Function(f) => {
                let mut buf = vec![0.0; dim];
                for i in 0..grid.steps() {
                    f(grid.node(i), &mut buf);
                    check(&buf)?;
                }
                Ok(())
            }
            Self::Table {
                paths: p,
                steps,
                dim: k,
                values,
            } => {
                if *p != paths || *steps != grid.steps() || *k != dim || values.len() != p * steps * k {
                    return Err(Error::Dimension(format!(
                        "control table is {p} paths x {steps} steps x {k}, expected {paths} x {} x {dim}",
                        grid.steps()
                    )));
                }
                values.chunks_exact(dim).try_for_each(check)
            }
        }
    }
}

/// A feedback law `(t, x) -> u`.
pub trait FeedbackPolicy: Send + Sync {
    fn control_dim(&self) -> usize;
    fn evaluate(&self, t: f64, x: &[f64], out: &mut [f64]);
}

/// The law `(t, x) -> u₀`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstantLaw(pub Vec<f64>);

impl FeedbackPolicy for ConstantLaw {
    fn control_dim(&self) -> usize {
        self.0.len()
    }

    fn evaluate(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

/// Simulated state paths with the increments and controls that drove them.
#[derive(Clone, Debug)]
pub struct PathEnsemble {
    grid: TimeGrid,
    paths: usize,
    state_dim: usize,
    noise_dim: usize,
    control_dim: usize,
    states: Vec<f64>,
    increments: Vec<f64>,
    controls: Vec<f64>,
    seed: u64,
}

impl PathEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `X[m][i]`, `i = 0..=N`.
    pub fn state(&self, m: usize, i: usize) -> &[f64] {
        let n = self.state_dim;
        let start = (m * (self.steps() + 1) + i) * n;
        &self.states[start..start + n]
    }

    /// First state coordinate, for scalar models.
    pub fn state1(&self, m: usize, i: usize) -> f64 {
        self.states[(m * (self.steps() + 1) + i) * self.state_dim]
    }

    /// `ΔB[m][i]`, `i = 0..N`.
    pub fn increment(&self, m: usize, i: usize) -> &[f64] {
        let d = self.noise_dim;
        let start = (m * self.steps() + i) * d;
        &self.increments[start..start + d]
    }

    /// Control applied on `[r_i, r_{i+1})`, `i = 0..N`.
    pub fn control(&self, m: usize, i: usize) -> &[f64] {
        let k = self.control_dim;
        let start = (m * self.steps() + i) * k;
        &self.controls[start..start + k]
    }

    /// The recorded controls as a path-dependent open-loop control.
    pub fn control_table(&self) -> OpenLoopControl {
        OpenLoopControl::Table {
            paths: self.paths,
            steps: self.steps(),
            dim: self.control_dim,
            values: Arc::new(self.controls.clone()),
        }
    }

    /// Export as CSV: `path,node,time,x0..,u0..`. Controls are blank at the
    /// final node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "# t0={} t1={} steps={} paths={} seed={}",
            self.grid.t0, self.grid.t1, self.grid.steps, self.paths, self.seed
        )?;
        let mut header = String::from("path,node,time");
        for k in 0..self.state_dim {
            header.push_str(&format!(",x{k}"));
        }
        for k in 0..self.control_dim {
            header.push_str(&format!(",u{k}"));
        }
        writeln!(w, "{header}")?;
        for m in 0..self.paths {
            for i in 0..=self.steps() {
                write!(w, "{m},{i},{}", self.grid.node(i))?;
                for v in self.state(m, i) {
                    write!(w, ",{v}")?;
                }
                if i < self.steps() {
                    for v in self.control(m, i) {
                        write!(w, ",{v}")?;
                    }
                } else {
                    for _ in 0..self.control_dim {
                        write!(w, ",")?;
                    }
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }
}

enum ControlSource<'a> {
    Open(&'a OpenLoopControl),
    Feedback(&'a dyn FeedbackPolicy),
}

/// Simulate `M` paths of `dX = b dr + σ dB` from `X(t) = x` under an
/// open-loop control.
pub fn simulate_paths(
    model: &ControlModel,
    t: f64,
    x: &[f64],
    control: &OpenLoopControl,
    grid: &TimeGrid,
    paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    check_inputs(model, t, x, grid, paths)?;
    control.validate(model, grid, paths)?;
    run(model, x, ControlSource::Open(control), grid, paths, seed)
}

/// Simulate under the feedback law `u_i = law(r_i, X_i)`, projected onto
/// `U`. The induced controls are recorded in the ensemble.
pub fn simulate_closed_loop(
    model: &ControlModel,
    law: &dyn FeedbackPolicy,
    t: f64,
    x: &[f64],
    grid: &TimeGrid,
    paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    check_inputs(model, t, x, grid, paths)?;
    if law.control_dim() != model.control_dim() {
        return Err(Error::Dimension(format!(
            "feedback law has {} control coordinates, model expects {}",
            law.control_dim(),
            model.control_dim()
        )));
    }
    run(model, x, ControlSource::Feedback(law), grid, paths, seed)
}

fn check_inputs(model: &ControlModel, t: f64, x: &[f64], grid: &TimeGrid, paths: usize) -> Result<()> {
    if t != grid.t0() {
        return Err(Error::InvalidInput(format!(
            "initial time {t} differs from grid start {}",
            grid.t0()
        )));
    }
    if grid.t1() > model.horizon() * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!(
            "grid end {} exceeds horizon {}",
            grid.t1(),
            model.horizon()
        )));
    }
    if x.len() != model.state_dim() {
        return Err(Error::Dimension(format!(
            "initial state has {} coordinates, model expects {}",
            x.len(),
            model.state_dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "initial state".into(),
            location: format!("{x:?}"),
        });
    }
    if paths == 0 {
        return Err(Error::InvalidInput("need at least one path".into()));
    }
    Ok(())
}

fn run(
    model: &ControlModel,
    x0: &[f64],
    source: ControlSource<'_>,
    grid: &TimeGrid,
    paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    let (n, d, k) = (model.state_dim(), model.noise_dim(), model.control_dim());
    let steps = grid.steps();
    let dt = grid.dt();
    let sqrt_dt = dt.sqrt();
    let mut states = vec![0.0; paths * (steps + 1) * n];
    let mut increments = vec![0.0; paths * steps * d];
    let mut controls = vec![0.0; paths * steps * k];
    let u_set = model.control_set();

    let failures: Vec<Option<usize>> = states
        .par_chunks_mut((steps + 1) * n)
        .zip(increments.par_chunks_mut(steps * d))
        .zip(controls.par_chunks_mut(steps * k))
        .enumerate()
        .map(|(m, ((xs, dbs), us))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(m as u64);
            let mut b = vec![0.0; n];
            let mut s = vec![0.0; n * d];
            xs[..n].copy_from_slice(x0);
            for i in 0..steps {
                let r = grid.node(i);
                let (head, tail) = xs.split_at_mut((i + 1) * n);
                let xi = &head[i * n..];
                let u = &mut us[i * k..(i + 1) * k];
                match source {
                    ControlSource::Open(c) => c.value(grid, m, i, u),
                    ControlSource::Feedback(law) => {
                        law.evaluate(r, xi, u);
                        u_set.project(u);
                    }
                }
                let db = &mut dbs[i * d..(i + 1) * d];
                for v in db.iter_mut() {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    *v = g * sqrt_dt;
                }
                model.drift(r, xi, u, &mut b);
                model.diffusion(r, xi, u, &mut s);
                let next = &mut tail[..n];
                let mut finite = true;
                for a in 0..n {
                    let mut v = xi[a] + b[a] * dt;
                    for c in 0..d {
                        v += s[a * d + c] * db[c];
                    }
                    finite &= v.is_finite();
                    next[a] = v;
                }
                if !finite {
                    return Some(i + 1);
                }
            }
            None
        })
        .collect();

    if let Some((path, node)) = failures.iter().enumerate().find_map(|(m, f)| f.map(|node| (m, node))) {
        return Err(Error::StateOverflow { path, node });
    }

    Ok(PathEnsemble {
        grid: *grid,
        paths,
        state_dim: n,
        noise_dim: d,
        control_dim: k,
        states,
        increments,
        controls,
        seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub k: u32,
    /// Empirical `E[sup_i |X_i|^k]`.
    pub sup_moment: f64,
    pub standard_error: f64,
    /// `sup_moment / (1 + |x|^k)` with `x` the initial state.
    pub ratio: f64,
}

/// Empirical sup-moment of the ensemble against the growth bound
/// `C(1 + |x|^k)`.
pub fn moment_check(ensemble: &PathEnsemble, k: u32) -> Result<MomentReport> {
    if k != 2 && k != 4 {
        return Err(Error::InvalidInput(format!("moment order must be 2 or 4, got {k}")));
    }
    let norm_k = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().powi(k as i32 / 2);
    let sups: Vec<f64> = (0..ensemble.paths())
        .map(|m| {
            (0..=ensemble.steps())
                .map(|i| norm_k(ensemble.state(m, i)))
                .fold(0.0, f64::max)
        })
        .collect();
    let count = sups.len() as f64;
    let mean = sups.iter().sum::<f64>() / count;
    let var = if sups.len() > 1 {
        sups.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (count - 1.0)
    } else {
        0.0
    };
    Ok(MomentReport {
        k,
        sup_moment: mean,
        standard_error: (var / count).sqrt(),
        ratio: mean / (1.0 + norm_k(ensemble.state(0, 0))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::examples::{example_classical, example_viscosity, zero_model, ExampleConfig};

    fn cfg() -> ExampleConfig {
        ExampleConfig::default()
    }

    #[test]
    fn grid_nodes_hit_endpoints() {
        let g = TimeGrid::new(0.25, 1.0, 3).unwrap();
        let nodes: Vec<f64> = g.nodes().collect();
        assert_eq!(nodes, vec![0.25, 0.5, 0.75, 1.0]);
        assert!(TimeGrid::new(1.0, 1.0, 3).is_err());
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn zero_dynamics_stay_put() {
        let m = zero_model(&cfg()).unwrap();
        let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let e = simulate_paths(&m, 0.0, &[2.5], &OpenLoopControl::constant(0.3), &g, 50, 1).unwrap();
        for p in 0..50 {
            for i in 0..=10 {
                assert_eq!(e.state1(p, i), 2.5);
            }
        }
    }

    #[test]
    fn viscosity_origin_paths_vanish() {
        let m = example_viscosity(&cfg()).unwrap();
        let g = TimeGrid::new(0.0, 1.0, 50).unwrap();
        let e = simulate_paths(&m, 0.0, &[0.0], &OpenLoopControl::constant(1.0), &g, 100, 9).unwrap();
        assert!(e.states.iter().all(|&v| v == 0.0));
        let rep = moment_check(&e, 2).unwrap();
        assert_eq!(rep.sup_moment, 0.0);
    }

    #[test]
    fn rejects_control_outside_set() {
        let m = example_classical(&cfg()).unwrap();
        let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let err = simulate_paths(&m, 0.0, &[1.0], &OpenLoopControl::constant(1.5), &g, 10, 1);
        assert!(matches!(err, Err(Error::ControlOutsideSet { .. })));
        let f = OpenLoopControl::function(|r, out| out[0] = 2.0 * r);
        assert!(simulate_paths(&m, 0.0, &[1.0], &f, &g, 10, 1).is_err());
    }

    #[test]
    fn rejects_mismatched_start() {
        let m = example_classical(&cfg()).unwrap();
        let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
        assert!(simulate_paths(&m, 0.1, &[1.0], &OpenLoopControl::constant(0.0), &g, 10, 1).is_err());
        let long = TimeGrid::new(0.0, 2.0, 10).unwrap();
        assert!(simulate_paths(&m, 0.0, &[1.0], &OpenLoopControl::constant(0.0), &long, 10, 1).is_err());
    }

    #[test]
    fn overflow_names_path_and_node() {
        let m = ControlModel::builder("blowup", crate::ControlSet::interval(0.0, 1.0, 2).unwrap())
            .drift1(|_, x, _| x * x * 1e200)
            .build()
            .unwrap();
        let g = TimeGrid::new(0.0, 1.0, 10).unwrap();
        let err = simulate_paths(&m, 0.0, &[1e200], &OpenLoopControl::constant(0.0), &g, 4, 1);
        assert!(matches!(err, Err(Error::StateOverflow { path: 0, node: 1 })));
    }

    #[test]
    fn seed_determinism_and_closed_loop_equivalence() {
        let m = example_classical(&cfg()).unwrap();
        let g = TimeGrid::new(0.0, 1.0, 20).unwrap();
        let c = OpenLoopControl::constant(0.5);
        let a = simulate_paths(&m, 0.0, &[1.0], &c, &g, 64, 42).unwrap();
        let b = simulate_paths(&m, 0.0, &[1.0], &c, &g, 64, 42).unwrap();
        assert_eq!(a.states, b.states);
        let law = ConstantLaw(vec![0.5]);
        let cl = simulate_closed_loop(&m, &law, 0.0, &[1.0], &g, 64, 42).unwrap();
        assert_eq!(a.states, cl.states);
        assert_eq!(a.increments, cl.increments);
        assert_eq!(a.controls, cl.controls);
        let other = simulate_paths(&m, 0.0, &[1.0], &c, &g, 64, 43).unwrap();
        assert_ne!(a.states, other.states);
    }

    #[test]
    fn closed_loop_projects_onto_control_set() {
        let m = example_classical(&cfg()).unwrap();
        let g = TimeGrid::new(0.0, 1.0, 5).unwrap();
        let law = ConstantLaw(vec![3.0]);
        let e = simulate_closed_loop(&m, &law, 0.0, &[1.0], &g, 3, 0).unwrap();
        assert!(e.controls.iter().all(|&u| u == 1.0));
    }

    #[test]
    fn schedule_switches_at_listed_times() {
        let c = OpenLoopControl::Schedule {
            switch_times: vec![0.0, 0.5],
            values: vec![vec![0.2], vec![0.8]],
        };
        let mut out = [0.0];
        c.value_at(0.49, &mut out);
        assert_eq!(out, [0.2]);
        c.value_at(0.5, &mut out);
        assert_eq!(out, [0.8]);
    }

    #[test]
    fn increments_have_expected_moments() {
        let m = example_classical(&cfg()).unwrap();
        let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let e = simulate_paths(&m, 0.0, &[1.0], &OpenLoopControl::constant(0.0), &g, 20_000, 5).unwrap();
        let n = e.increments.len() as f64;
        let mean = e.increments.iter().sum::<f64>() / n;
        let var = e.increments.iter().map(|v| v * v).sum::<f64>() / n;
        // standard errors: sqrt(Δ/n) for the mean, Δ·sqrt(2/n) for the variance
        assert!(mean.abs() < 4.0 * (0.25 / n).sqrt());
        assert!((var - 0.25).abs() < 4.0 * 0.25 * (2.0 / n).sqrt());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let m = zero_model(&cfg()).unwrap();
        let g = TimeGrid::new(0.0, 1.0, 2).unwrap();
        let e = simulate_paths(&m, 0.0, &[1.0], &OpenLoopControl::constant(0.5), &g, 2, 3).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# t0=0 t1=1 steps=2 paths=2 seed=3");
        assert_eq!(lines[1], "path,node,time,x0,u0");
        assert_eq!(lines[2], "0,0,0,1,0.5");
        assert_eq!(lines[4], "0,2,1,1,");
        assert_eq!(lines.len(), 2 + 2 * 3);
    }
}
