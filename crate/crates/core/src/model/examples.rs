//! Built-in problem instances and the name-keyed catalog used by configs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ControlModel, ControlSet, StructureFlags};
use crate::error::{Error, Result};

pub const CATALOG_NAMES: [&str; 4] = ["example-classical", "example-viscosity", "zero", "linear-inert"];

/// Obstacle level used by the linear model; far above any value it reaches.
pub const INERT_OBSTACLE: f64 = 1e9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExampleConfig {
    pub horizon: f64,
    /// Grid points per control coordinate.
    pub control_points: usize,
}

impl Default for ExampleConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            control_points: 11,
        }
    }
}

/// Look up a built-in model by catalog name.
pub fn catalog(name: &str, cfg: &ExampleConfig) -> Result<ControlModel> {
    match name {
        "example-classical" => example_classical(cfg),
        "example-viscosity" => example_viscosity(cfg),
        "zero" => zero_model(cfg),
        "linear-inert" => linear_inert(cfg),
        other => Err(Error::InvalidInput(format!(
            "unknown model '{other}' (known: {})",
            CATALOG_NAMES.join(", ")
        ))),
    }
}

/// `dX = (X + u)ds + X dB`, `f = y + u`, `Φ(x) = x`, `h(t, x) = x e^{2T}`,
/// `U = [0, 1]`. Its value function is `x e^{2T-2t}` wherever that stays
/// below the obstacle, which is `x ≥ 0`.
pub fn example_classical(cfg: &ExampleConfig) -> Result<ControlModel> {
    let t_end = cfg.horizon;
    let level = (2.0 * t_end).exp();
    ControlModel::builder("example-classical", ControlSet::interval(0.0, 1.0, cfg.control_points)?)
        .horizon(t_end)
        .drift1(|_, x, u| x + u)
        .diffusion1(|_, x, _| x)
        .driver1(|_, _, y, _, u| y + u)
        .terminal1(|x| x)
        .obstacle1(move |_, x| x * level)
        .structure(StructureFlags {
            a1: Some(true),
            a2: Some(true),
            a3: Some(true),
            a4: Some(false),
        })
        .build()
}

/// `dX = X u ds + X dB`, `f = -|y|`, `Φ(x) = x`, `h(t, x) = x⁺`,
/// `U = [1, 2]`. The value function has a concave kink along `x = 0`.
pub fn example_viscosity(cfg: &ExampleConfig) -> Result<ControlModel> {
    ControlModel::builder("example-viscosity", ControlSet::interval(1.0, 2.0, cfg.control_points)?)
        .horizon(cfg.horizon)
        .drift1(|_, x, u| x * u)
        .diffusion1(|_, x, _| x)
        .driver1(|_, _, y, _, _| -y.abs())
        .terminal1(|x| x)
        .obstacle1(|_, x| if x > 0.0 { x } else { 0.0 })
        .structure(StructureFlags {
            a1: Some(true),
            a2: Some(true),
            a3: Some(true),
            a4: Some(false),
        })
        .value_kinks(vec![0.0])
        .build()
}

/// `b = σ = f = 0`, `Φ = 0`, `h = 1`.
pub fn zero_model(cfg: &ExampleConfig) -> Result<ControlModel> {
    ControlModel::builder("zero", ControlSet::interval(0.0, 1.0, cfg.control_points)?)
        .horizon(cfg.horizon)
        .obstacle1(|_, _| 1.0)
        .structure(StructureFlags {
            a1: Some(true),
            a2: Some(true),
            a3: Some(true),
            a4: Some(true),
        })
        .build()
}

/// Deterministic linear model: `b = σ = 0`, `f = y`, `Φ = 1` and an
/// obstacle that never binds, so `Y(t) = e^{T-t}`.
pub fn linear_inert(cfg: &ExampleConfig) -> Result<ControlModel> {
    ControlModel::builder("linear-inert", ControlSet::interval(0.0, 1.0, cfg.control_points)?)
        .horizon(cfg.horizon)
        .driver1(|_, _, y, _, _| y)
        .terminal1(|_| 1.0)
        .obstacle1(|_, _| INERT_OBSTACLE)
        .structure(StructureFlags {
            a1: Some(true),
            a2: Some(true),
            a3: Some(true),
            a4: Some(true),
        })
        .build()
}

/// Closed-form value of [`example_classical`]: `x e^{2T-2t}`.
pub fn classical_value(horizon: f64, t: f64, x: f64) -> f64 {
    x * (2.0 * (horizon - t)).exp()
}

/// Closed-form value of [`example_viscosity`]: `x` for `x > 0`,
/// `x e^{3T-3t}` otherwise.
pub fn viscosity_value(horizon: f64, t: f64, x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x * (3.0 * (horizon - t)).exp()
    }
}

/// Scalar model with bounded, Lipschitz coefficients drawn from a fixed
/// family of shapes. The obstacle sits close enough to the terminal value
/// that reflection is active on a sizeable share of paths.
pub fn random_bounded(seed: u64, cfg: &ExampleConfig) -> Result<ControlModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_end = cfg.horizon;

    let drift_kind = rng.random_range(0..3);
    let (a, c) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let diffusion_kind = rng.random_range(0..3);
    let s = rng.random_range(0.1..0.6);
    let driver_kind = rng.random_range(0..3);
    let (k, g) = (rng.random_range(-1.0..1.0), rng.random_range(0.2..1.5));
    let terminal_kind = rng.random_range(0..3);
    let margin = rng.random_range(0.0..0.3);
    let slope = rng.random_range(0.0..0.5);
    let wiggle = rng.random_range(0.0..0.4);

    let terminal = move |x: f64| match terminal_kind {
        0 => x.sin(),
        1 => x.tanh() + 0.5 * (2.0 * x).cos(),
        _ => x.clamp(-1.0, 1.0),
    };

    ControlModel::builder(
        format!("random-{seed}"),
        ControlSet::interval(-1.0, 1.0, cfg.control_points)?,
    )
    .horizon(t_end)
    .drift1(move |_, x, u| match drift_kind {
        0 => a * x.sin() + c * u,
        1 => a * x.tanh() - 0.5 * u,
        _ => a * (x.cos() + u * x.sin()),
    })
    .diffusion1(move |_, x, u| match diffusion_kind {
        0 => s * (1.0 + 0.5 * x.cos()),
        1 => s,
        _ => s * (1.0 + 0.3 * x.tanh()) * (1.0 + 0.2 * u),
    })
    .driver1(move |r, x, y, z, u| match driver_kind {
        0 => k * y + g * z.sin() + 0.1 * u,
        1 => -k.abs() * y.abs() + g * x.cos() + (1.0 - r) * u,
        _ => k * y.tanh() + 0.5 * g * z.tanh() + g * u * x.sin(),
    })
    .terminal1(terminal)
    .obstacle1(move |r, x| terminal(x) + margin + slope * (t_end - r) + wiggle * (3.0 * x).sin().abs())
    .build()
}
