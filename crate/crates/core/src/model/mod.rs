//! Problem instances: coefficients, obstacle, control set and structural
//! metadata of a reflected forward-backward control problem.

mod assumptions;
mod control_set;
pub mod examples;

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

pub use assumptions::{
    validate_assumptions, AssumptionEntry, AssumptionReport, ProbeBox, SamplePoint, Status, SubCheck,
};
pub use control_set::ControlSet;
pub use examples::{catalog, ExampleConfig, CATALOG_NAMES};

/// `b(r, x, u)` written into an `n`-vector.
pub type DriftFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `σ(r, x, u)` written row-major into an `n × d` buffer.
pub type DiffusionFn = Arc<dyn Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;
/// `f(r, x, y, z, u)`.
pub type DriverFn = Arc<dyn Fn(f64, &[f64], f64, &[f64], &[f64]) -> f64 + Send + Sync>;
/// `Φ(x)`.
pub type TerminalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// `h(r, x)`. `+∞` means the constraint is absent at that point.
pub type ObstacleFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// Declared structural properties (A1)-(A4). `None` means undeclared.
///
/// These are recorded, never measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StructureFlags {
    pub a1: Option<bool>,
    pub a2: Option<bool>,
    pub a3: Option<bool>,
    pub a4: Option<bool>,
}

/// The tuple `(b, σ, f, Φ, h, U)` on `[0, T]`, immutable once built.
#[derive(Clone)]
pub struct ControlModel {
    name: String,
    horizon: f64,
    state_dim: usize,
    noise_dim: usize,
    control_set: ControlSet,
    drift: DriftFn,
    diffusion: DiffusionFn,
    driver: DriverFn,
    terminal: TerminalFn,
    obstacle: ObstacleFn,
    structure: StructureFlags,
    value_kinks: Vec<f64>,
}

impl fmt::Debug for ControlModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlModel")
            .field("name", &self.name)
            .field("horizon", &self.horizon)
            .field("state_dim", &self.state_dim)
            .field("noise_dim", &self.noise_dim)
            .field("control_set", &self.control_set)
            .field("structure", &self.structure)
            .field("value_kinks", &self.value_kinks)
            .finish_non_exhaustive()
    }
}

impl ControlModel {
    pub fn builder(name: impl Into<String>, control_set: ControlSet) -> ControlModelBuilder {
        ControlModelBuilder::new(name.into(), control_set)
    }

    /// Start a builder pre-filled with this model's data.
    pub fn to_builder(&self) -> ControlModelBuilder {
        ControlModelBuilder {
            name: self.name.clone(),
            horizon: self.horizon,
            state_dim: self.state_dim,
            noise_dim: self.noise_dim,
            control_set: self.control_set.clone(),
            drift: self.drift.clone(),
            diffusion: self.diffusion.clone(),
            driver: self.driver.clone(),
            terminal: self.terminal.clone(),
            obstacle: self.obstacle.clone(),
            structure: self.structure,
            value_kinks: self.value_kinks.clone(),
            scalar_setter: false,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn control_dim(&self) -> usize {
        self.control_set.dim()
    }

    pub fn control_set(&self) -> &ControlSet {
        &self.control_set
    }

    pub fn structure(&self) -> StructureFlags {
        self.structure
    }

    /// State coordinates (scalar models) where the value function is known
    /// not to be differentiable in `x`.
    pub fn value_kinks(&self) -> &[f64] {
        &self.value_kinks
    }

    pub fn is_scalar(&self) -> bool {
        self.state_dim == 1 && self.noise_dim == 1
    }

    pub fn drift(&self, r: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.drift)(r, x, u, out)
    }

    pub fn diffusion(&self, r: f64, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.diffusion)(r, x, u, out)
    }

    pub fn driver(&self, r: f64, x: &[f64], y: f64, z: &[f64], u: &[f64]) -> f64 {
        (self.driver)(r, x, y, z, u)
    }

    pub fn terminal(&self, x: &[f64]) -> f64 {
        (self.terminal)(x)
    }

    pub fn obstacle(&self, r: f64, x: &[f64]) -> f64 {
        (self.obstacle)(r, x)
    }

    /// `a = ½ σσᵀ`, row-major `n × n`.
    pub fn diffusion_generator(&self, r: f64, x: &[f64], u: &[f64]) -> Vec<f64> {
        let (n, d) = (self.state_dim, self.noise_dim);
        let mut s = vec![0.0; n * d];
        self.diffusion(r, x, u, &mut s);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += s[i * d + k] * s[j * d + k];
                }
                a[i * n + j] = 0.5 * acc;
            }
        }
        a
    }

    pub fn b1(&self, r: f64, x: f64, u: f64) -> f64 {
        let mut out = [0.0];
        self.drift(r, &[x], &[u], &mut out);
        out[0]
    }

    pub fn sigma1(&self, r: f64, x: f64, u: f64) -> f64 {
        let mut out = [0.0];
        self.diffusion(r, &[x], &[u], &mut out);
        out[0]
    }

    pub fn f1(&self, r: f64, x: f64, y: f64, z: f64, u: f64) -> f64 {
        self.driver(r, &[x], y, &[z], &[u])
    }

    pub fn phi1(&self, x: f64) -> f64 {
        self.terminal(&[x])
    }

    pub fn h1(&self, r: f64, x: f64) -> f64 {
        self.obstacle(r, &[x])
    }
}

pub struct ControlModelBuilder {
    name: String,
    horizon: f64,
    state_dim: usize,
    noise_dim: usize,
    control_set: ControlSet,
    drift: DriftFn,
    diffusion: DiffusionFn,
    driver: DriverFn,
    terminal: TerminalFn,
    obstacle: ObstacleFn,
    structure: StructureFlags,
    value_kinks: Vec<f64>,
    scalar_setter: bool,
}

impl ControlModelBuilder {
    /// Zero coefficients, zero terminal value and no obstacle.
    fn new(name: String, control_set: ControlSet) -> Self {
        Self {
            name,
            horizon: 1.0,
            state_dim: 1,
            noise_dim: 1,
            control_set,
            drift: Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0)),
            diffusion: Arc::new(|_, _, _, out: &mut [f64]| out.fill(0.0)),
            driver: Arc::new(|_, _, _, _, _| 0.0),
            terminal: Arc::new(|_| 0.0),
            obstacle: Arc::new(|_, _| f64::INFINITY),
            structure: StructureFlags::default(),
            value_kinks: Vec::new(),
            scalar_setter: false,
        }
    }

    pub fn name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn dims(mut self, state_dim: usize, noise_dim: usize) -> Self {
        self.state_dim = state_dim;
        self.noise_dim = noise_dim;
        self
    }

    pub fn control_set(mut self, control_set: ControlSet) -> Self {
        self.control_set = control_set;
        self
    }

    pub fn drift<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.drift = Arc::new(f);
        self
    }

    pub fn diffusion<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.diffusion = Arc::new(f);
        self
    }

    pub fn driver<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &[f64], f64, &[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.driver = Arc::new(f);
        self
    }

    pub fn terminal<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.terminal = Arc::new(f);
        self
    }

    pub fn obstacle<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.obstacle = Arc::new(f);
        self
    }

    /// Scalar drift `b(r, x, u)`; requires `n = d = m = 1`.
    pub fn drift1<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.scalar_setter = true;
        self.drift = Arc::new(move |r, x, u, out: &mut [f64]| out[0] = f(r, x[0], u[0]));
        self
    }

    pub fn diffusion1<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.scalar_setter = true;
        self.diffusion = Arc::new(move |r, x, u, out: &mut [f64]| out[0] = f(r, x[0], u[0]));
        self
    }

    /// Scalar driver `f(r, x, y, z, u)`.
    pub fn driver1<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.scalar_setter = true;
        self.driver = Arc::new(move |r, x, y, z, u| f(r, x[0], y, z[0], u[0]));
        self
    }

    pub fn terminal1<F>(mut self, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        self.scalar_setter = true;
        self.terminal = Arc::new(move |x| f(x[0]));
        self
    }

    pub fn obstacle1<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.scalar_setter = true;
        self.obstacle = Arc::new(move |r, x| f(r, x[0]));
        self
    }

    pub fn structure(mut self, flags: StructureFlags) -> Self {
        self.structure = flags;
        self
    }

    pub fn value_kinks(mut self, kinks: Vec<f64>) -> Self {
        self.value_kinks = kinks;
        self
    }

    pub fn build(self) -> Result<ControlModel> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidInput(format!(
                "horizon must be positive and finite, got {}",
                self.horizon
            )));
        }
        if self.state_dim == 0 || self.noise_dim == 0 {
            return Err(Error::Dimension("state and noise dimensions must be positive".into()));
        }
        if self.scalar_setter && (self.state_dim != 1 || self.noise_dim != 1 || self.control_set.dim() != 1) {
            return Err(Error::Dimension(format!(
                "scalar coefficient setters need n = d = m = 1, got n = {}, d = {}, m = {}",
                self.state_dim,
                self.noise_dim,
                self.control_set.dim()
            )));
        }
        if self.value_kinks.iter().any(|k| !k.is_finite()) {
            return Err(Error::InvalidInput("value kinks must be finite".into()));
        }
        let mut value_kinks = self.value_kinks;
        value_kinks.sort_by(f64::total_cmp);
        Ok(ControlModel {
            name: self.name,
            horizon: self.horizon,
            state_dim: self.state_dim,
            noise_dim: self.noise_dim,
            control_set: self.control_set,
            drift: self.drift,
            diffusion: self.diffusion,
            driver: self.driver,
            terminal: self.terminal,
            obstacle: self.obstacle,
            structure: self.structure,
            value_kinks,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> ControlSet {
        ControlSet::interval(0.0, 1.0, 3).unwrap()
    }

    #[test]
    fn builder_defaults_are_zero_without_obstacle() {
        let m = ControlModel::builder("z", unit()).build().unwrap();
        assert_eq!(m.b1(0.2, 3.0, 1.0), 0.0);
        assert_eq!(m.sigma1(0.2, 3.0, 1.0), 0.0);
        assert_eq!(m.f1(0.2, 3.0, 1.0, 2.0, 0.5), 0.0);
        assert_eq!(m.phi1(4.0), 0.0);
        assert_eq!(m.h1(0.5, 1.0), f64::INFINITY);
    }

    #[test]
    fn scalar_setters_require_scalar_dims() {
        let err = ControlModel::builder("bad", unit())
            .dims(2, 1)
            .drift1(|_, x, _| x)
            .build();
        assert!(matches!(err, Err(Error::Dimension(_))));
    }

    #[test]
    fn rejects_nonpositive_horizon() {
        assert!(ControlModel::builder("m", unit()).horizon(0.0).build().is_err());
        assert!(ControlModel::builder("m", unit()).horizon(f64::NAN).build().is_err());
    }

    #[test]
    fn generator_is_half_sigma_sigma_t() {
        let m = ControlModel::builder("v", unit())
            .dims(2, 2)
            .diffusion(|_, x, _, out| {
                out[0] = x[0];
                out[1] = 1.0;
                out[2] = 0.0;
                out[3] = x[1];
            })
            .build()
            .unwrap();
        let a = m.diffusion_generator(0.0, &[2.0, 3.0], &[0.0]);
        assert_eq!(a, vec![2.5, 1.5, 1.5, 4.5]);
    }

    #[test]
    fn to_builder_round_trips() {
        let m = ControlModel::builder("m", unit())
            .drift1(|_, x, u| x + u)
            .value_kinks(vec![1.0, -1.0])
            .build()
            .unwrap();
        let shifted = m.to_builder().driver1(|_, _, y, _, _| y + 1.0).build().unwrap();
        assert_eq!(shifted.b1(0.0, 2.0, 0.5), 2.5);
        assert_eq!(shifted.f1(0.0, 0.0, 1.0, 0.0, 0.0), 2.0);
        assert_eq!(shifted.value_kinks(), &[-1.0, 1.0]);
    }
}
