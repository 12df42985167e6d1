//! Binary-tree oracle for scalar problems.
//!
//! Each node branches to `m ± s` with probability ½, matching the first two
//! moments of one step of the state equation. Coefficients depend on the
//! state, so branches do not recombine and the tree is walked in full:
//! `2^depth` leaves. The backward recursion takes exact expectations over
//! the two children, so the only error is the time discretization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ControlModel;
use crate::simulate::FeedbackPolicy;

pub const MAX_TREE_DEPTH: usize = 20;

const PICARD_LIMIT: usize = 100;
const PICARD_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeScheme {
    /// Heun-corrected branch mean and trapezoidal driver integration.
    #[default]
    SecondOrder,
    /// Euler branch mean and implicit Euler driver, the same time
    /// discretization as the Monte Carlo solver on a grid with `depth` steps.
    MatchedEuler,
}

/// Reflected-BSDE value at `(t, x)` under the deterministic feedback
/// `control`, computed on a full binary tree with `depth` steps to `T`.
pub fn tree_oracle(
    model: &ControlModel,
    t: f64,
    x: f64,
    control: &dyn FeedbackPolicy,
    depth: usize,
    scheme: TreeScheme,
) -> Result<f64> {
    if !model.is_scalar() || model.control_dim() != control.control_dim() {
        return Err(Error::Dimension(
            "tree oracle needs a scalar state and noise and a matching control".into(),
        ));
    }
    if depth == 0 {
        return Err(Error::InvalidInput("tree depth must be positive".into()));
    }
    if depth > MAX_TREE_DEPTH {
        return Err(Error::DepthTooLarge {
            depth,
            limit: MAX_TREE_DEPTH,
        });
    }
    if !(t >= 0.0 && t < model.horizon()) || !x.is_finite() {
        return Err(Error::InvalidInput(format!("tree start ({t}, {x}) outside [0, T) x R")));
    }
    let walker = Walker {
        model,
        control,
        scheme,
        t0: t,
        dt: (model.horizon() - t) / depth as f64,
        depth,
        u: vec![0.0; model.control_dim()],
    };
    walker.value(0, x)
}

struct Walker<'a> {
    model: &'a ControlModel,
    control: &'a dyn FeedbackPolicy,
    scheme: TreeScheme,
    t0: f64,
    dt: f64,
    depth: usize,
    u: Vec<f64>,
}

impl Walker<'_> {
    fn time(&self, i: usize) -> f64 {
        if i == self.depth {
            self.model.horizon()
        } else {
            self.t0 + self.dt * i as f64
        }
    }

    fn value(&self, i: usize, x: f64) -> Result<f64> {
        let m = self.model;
        if i == self.depth {
            let y = m.phi1(x);
            return finite(y, "terminal value", i, x);
        }
        let r = self.time(i);
        let r_next = self.time(i + 1);
        let dt = self.dt;
        let mut u = self.u.clone();
        self.control.evaluate(r, &[x], &mut u);
        m.control_set().project(&mut u);
        let b = m.b1(r, x, u[0]);
        let s = m.sigma1(r, x, u[0]);
        let mean = match self.scheme {
            TreeScheme::MatchedEuler => x + b * dt,
            TreeScheme::SecondOrder => {
                let predictor = x + b * dt;
                x + 0.5 * (b + m.b1(r_next, predictor, u[0])) * dt
            }
        };
        let spread = s.abs() * dt.sqrt();
        finite(mean, "branch mean", i, x)?;
        finite(spread, "branch spread", i, x)?;

        let (x_up, x_down) = (mean + spread, mean - spread);
        let y_up = self.value(i + 1, x_up)?;
        let y_down = if spread == 0.0 {
            y_up
        } else {
            self.value(i + 1, x_down)?
        };
        let expect = 0.5 * (y_up + y_down);
        // E[Y_{i+1} ΔB] / Δ with ΔB = ±√Δ along the sign of σ.
        let z = if spread == 0.0 {
            0.0
        } else {
            s.signum() * (y_up - y_down) / (2.0 * dt.sqrt())
        };
        let h = m.h1(r, x);

        let y = match self.scheme {
            TreeScheme::MatchedEuler => solve_fixed_point(|y| expect + m.f1(r, x, y, z, u[0]) * dt)?,
            TreeScheme::SecondOrder => {
                let f_next = 0.5 * (m.f1(r_next, x_up, y_up, z, u[0]) + m.f1(r_next, x_down, y_down, z, u[0]));
                solve_fixed_point(|y| expect + 0.5 * (m.f1(r, x, y, z, u[0]) + f_next) * dt)?
            }
        };
        finite(y.min(h), "Y", i, x)
    }
}

fn solve_fixed_point(g: impl Fn(f64) -> f64) -> Result<f64> {
    let mut y = g(0.0);
    for step in 0..PICARD_LIMIT {
        let next = g(y);
        let change = (next - y).abs();
        y = next;
        if change <= PICARD_TOL * (1.0 + y.abs()) {
            return Ok(y);
        }
        if step + 1 == PICARD_LIMIT {
            return Err(Error::FixedPointNotConverged { step: 0, change });
        }
    }
    Ok(y)
}

fn finite(v: f64, what: &str, node: usize, x: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            what: what.into(),
            location: format!("tree level {node}, state {x}"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::examples::{example_classical, example_viscosity, linear_inert, zero_model, ExampleConfig};
    use crate::simulate::ConstantLaw;

    fn cfg() -> ExampleConfig {
        ExampleConfig::default()
    }

    #[test]
    fn zero_model_gives_zero() {
        let m = zero_model(&cfg()).unwrap();
        let v = tree_oracle(&m, 0.0, 1.0, &ConstantLaw(vec![0.0]), 20, TreeScheme::default()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn classical_depth_16_within_two_percent() {
        let m = example_classical(&cfg()).unwrap();
        let v = tree_oracle(&m, 0.0, 1.0, &ConstantLaw(vec![0.0]), 16, TreeScheme::SecondOrder).unwrap();
        let target = 2f64.exp();
        assert!((v - target).abs() <= 0.02 * target, "{v}");
        assert!((v - target).abs() <= 1e-3 * target, "{v}");
    }

    #[test]
    fn linear_model_within_1e3_of_exponential() {
        let m = linear_inert(&cfg()).unwrap();
        let law = ConstantLaw(vec![0.0]);
        let v = tree_oracle(&m, 0.0, 1.0, &law, 16, TreeScheme::SecondOrder).unwrap();
        assert!((v - 1f64.exp()).abs() < 1e-3, "{v}");
        let from_half = tree_oracle(&m, 0.5, 1.0, &law, 16, TreeScheme::SecondOrder).unwrap();
        assert!((from_half - 0.5f64.exp()).abs() < 1e-3);
    }

    #[test]
    fn matched_euler_reproduces_implicit_recursion() {
        let m = linear_inert(&cfg()).unwrap();
        let v = tree_oracle(&m, 0.0, 1.0, &ConstantLaw(vec![0.0]), 16, TreeScheme::MatchedEuler).unwrap();
        assert!((v - (1.0 - 1.0 / 16.0f64).powi(-16)).abs() < 1e-12);
    }

    #[test]
    fn viscosity_origin_is_zero() {
        let m = example_viscosity(&cfg()).unwrap();
        let v = tree_oracle(&m, 0.0, 0.0, &ConstantLaw(vec![1.0]), 12, TreeScheme::default()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn refuses_deep_trees() {
        let m = zero_model(&cfg()).unwrap();
        let err = tree_oracle(&m, 0.0, 0.0, &ConstantLaw(vec![0.0]), 21, TreeScheme::default());
        assert!(matches!(err, Err(Error::DepthTooLarge { depth: 21, limit: 20 })));
    }
}
