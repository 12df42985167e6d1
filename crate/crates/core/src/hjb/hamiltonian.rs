use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::ControlModel;

/// Arguments `(r, x, y, p, P, u)` of the Hamiltonian. `p_mat` is the
/// symmetric `n × n` matrix `P`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HamiltonianQuery {
    pub r: f64,
    pub x: Vec<f64>,
    pub y: f64,
    pub p: Vec<f64>,
    pub p_mat: Vec<f64>,
    pub u: Vec<f64>,
}

impl HamiltonianQuery {
    pub fn scalar(r: f64, x: f64, y: f64, p: f64, p_mat: f64, u: f64) -> Self {
        Self {
            r,
            x: vec![x],
            y,
            p: vec![p],
            p_mat: vec![p_mat],
            u: vec![u],
        }
    }

    fn validate(&self, model: &ControlModel) -> Result<()> {
        let n = model.state_dim();
        if self.x.len() != n || self.p.len() != n || self.p_mat.len() != n * n {
            return Err(Error::Dimension(format!(
                "Hamiltonian query shapes do not match state dimension {n}"
            )));
        }
        if self.u.len() != model.control_dim() {
            return Err(Error::Dimension("control has the wrong dimension".into()));
        }
        for a in 0..n {
            for b in 0..a {
                let (p, q) = (self.p_mat[a * n + b], self.p_mat[b * n + a]);
                if (p - q).abs() > 1e-12 * (1.0 + p.abs().max(q.abs())) {
                    return Err(Error::InvalidInput("P must be symmetric".into()));
                }
            }
        }
        Ok(())
    }
}

/// `H = tr(½σσᵀP) + p·b + f(r, x, y, σᵀp, u)`.
pub fn hamiltonian(model: &ControlModel, q: &HamiltonianQuery) -> Result<f64> {
    q.validate(model)?;
    if !model.control_set().contains(&q.u) {
        return Err(Error::ControlOutsideSet { value: q.u.clone() });
    }
    evaluate(model, q.r, &q.x, q.y, &q.p, &q.p_mat, &q.u)
}

fn evaluate(model: &ControlModel, r: f64, x: &[f64], y: f64, p: &[f64], p_mat: &[f64], u: &[f64]) -> Result<f64> {
    let (n, d) = (model.state_dim(), model.noise_dim());
    let mut b = vec![0.0; n];
    let mut s = vec![0.0; n * d];
    model.drift(r, x, u, &mut b);
    model.diffusion(r, x, u, &mut s);
    check("drift b", &b, r, x, u)?;
    check("diffusion sigma", &s, r, x, u)?;
    let mut trace = 0.0;
    for a in 0..n {
        for c in 0..n {
            let mut acc = 0.0;
            for k in 0..d {
                acc += s[a * d + k] * s[c * d + k];
            }
            trace += 0.5 * acc * p_mat[c * n + a];
        }
    }
    let drift: f64 = p.iter().zip(&b).map(|(pi, bi)| pi * bi).sum();
    let z: Vec<f64> = (0..d).map(|k| (0..n).map(|a| p[a] * s[a * d + k]).sum()).collect();
    let f = model.driver(r, x, y, &z, u);
    check("driver f", &[f], r, x, u)?;
    Ok(trace + drift + f)
}

fn check(what: &str, v: &[f64], r: f64, x: &[f64], u: &[f64]) -> Result<()> {
    if v.iter().all(|a| a.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what: what.into(),
            location: format!("r = {r}, x = {x:?}, u = {u:?}"),
        })
    }
}

/// Scalar Hamiltonian `½σ²P + p b + f(r, x, y, pσ, u)` without checks,
/// for inner solver loops.
#[inline]
pub(crate) fn hamiltonian1(model: &ControlModel, r: f64, x: f64, y: f64, p: f64, pp: f64, u: f64) -> f64 {
    let b = model.b1(r, x, u);
    let s = model.sigma1(r, x, u);
    0.5 * s * s * pp + p * b + model.f1(r, x, y, p * s, u)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InfHamiltonian {
    pub value: f64,
    /// All grid controls within the tie tolerance of the minimum, in
    /// lexicographic order.
    pub argmin: Vec<Vec<f64>>,
}

impl InfHamiltonian {
    /// Canonical selector value: the lexicographically smallest minimizer.
    pub fn canonical(&self) -> &[f64] {
        &self.argmin[0]
    }
}

/// Relative tie tolerance for the argmin set.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Minimize the Hamiltonian over the control grid.
pub fn inf_hamiltonian(
    model: &ControlModel,
    r: f64,
    x: &[f64],
    y: f64,
    p: &[f64],
    p_mat: &[f64],
) -> Result<InfHamiltonian> {
    let probe = HamiltonianQuery {
        r,
        x: x.to_vec(),
        y,
        p: p.to_vec(),
        p_mat: p_mat.to_vec(),
        u: model.control_set().point(0).to_vec(),
    };
    probe.validate(model)?;
    let values: Vec<f64> = model
        .control_set()
        .iter()
        .map(|u| evaluate(model, r, x, y, p, p_mat, u))
        .collect::<Result<_>>()?;
    let value = values.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = TIE_TOLERANCE * (1.0 + value.abs());
    let argmin = model
        .control_set()
        .iter()
        .zip(&values)
        .filter(|(_, &v)| v <= value + tol)
        .map(|(u, _)| u.to_vec())
        .collect();
    Ok(InfHamiltonian { value, argmin })
}

/// Scalar grid search returning `(min, canonical argmin index)`.
#[inline]
pub(crate) fn inf_hamiltonian1(model: &ControlModel, r: f64, x: f64, y: f64, p: f64, pp: f64) -> (f64, usize) {
    let set = model.control_set();
    let mut stack = [0.0f64; 64];
    let mut heap = Vec::new();
    let values: &mut [f64] = if set.len() <= stack.len() {
        &mut stack[..set.len()]
    } else {
        heap.resize(set.len(), 0.0);
        &mut heap
    };
    let mut best = f64::INFINITY;
    for (slot, u) in values.iter_mut().zip(set.iter()) {
        *slot = hamiltonian1(model, r, x, y, p, pp, u[0]);
        best = best.min(*slot);
    }
    let tol = TIE_TOLERANCE * (1.0 + best.abs());
    let arg = values.iter().position(|&v| v <= best + tol).unwrap_or(0);
    (best, arg)
}
