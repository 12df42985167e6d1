//! Cross-path estimators of conditional expectations given the current state.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How `E[ξ | X_i]` is estimated from paired samples `(X_i^m, ξ^m)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Estimator {
    /// Least squares on all monomials of total degree `<= degree` in the
    /// standardized state.
    Polynomial { degree: usize },
    /// Equal-mass bins on the first state coordinate; the estimate is the
    /// bin average.
    Binning { bins: usize },
}

impl Default for Estimator {
    fn default() -> Self {
        Self::Polynomial { degree: 3 }
    }
}

impl Estimator {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Polynomial { degree: 0 } => Err(Error::InvalidInput(
                "polynomial estimator degree must be at least 1".into(),
            )),
            Self::Binning { bins: 0 } => Err(Error::InvalidInput("binning estimator needs at least one bin".into())),
            _ => Ok(()),
        }
    }
}

/// Reciprocal condition bound below which the Gram matrix counts as singular.
const MIN_RCOND: f64 = 1e-13;

/// An estimator fitted to the states of one time node, ready to project any
/// number of targets.
pub(crate) struct ConditionalExpectation {
    fit: Fit,
    fell_back: bool,
}

enum Fit {
    Constant,
    Poly {
        basis: Vec<f64>,
        width: usize,
        chol: Cholesky<f64, Dyn>,
    },
    Bins {
        assignment: Vec<usize>,
        counts: Vec<usize>,
    },
}

impl ConditionalExpectation {
    /// `features` holds `rows` states of dimension `dim`, row-major.
    pub fn fit(features: &[f64], dim: usize, estimator: Estimator) -> Self {
        let rows = features.len() / dim;
        let active = active_coordinates(features, dim);
        if active.is_empty() || rows < 2 {
            return Self {
                fit: Fit::Constant,
                fell_back: false,
            };
        }
        match estimator {
            Estimator::Binning { bins } => Self {
                fit: bin_fit(features, dim, bins),
                fell_back: false,
            },
            Estimator::Polynomial { degree } => match poly_fit(features, dim, &active, degree) {
                Some(fit) => Self { fit, fell_back: false },
                None => Self {
                    fit: bin_fit(features, dim, fallback_bins(rows)),
                    fell_back: true,
                },
            },
        }
    }

    /// True when a singular regression forced the binning estimator.
    pub fn fell_back(&self) -> bool {
        self.fell_back
    }

    /// Fitted conditional expectation of `target`, one value per row.
    pub fn project(&self, target: &[f64], out: &mut [f64]) {
        match &self.fit {
            Fit::Constant => {
                let mean = target.iter().sum::<f64>() / target.len() as f64;
                out.fill(mean);
            }
            Fit::Poly { basis, width, chol } => {
                let w = *width;
                let mut rhs = DVector::zeros(w);
                for (row, &y) in basis.chunks_exact(w).zip(target) {
                    for k in 0..w {
                        rhs[k] += row[k] * y;
                    }
                }
                let coef = chol.solve(&rhs);
                for (row, o) in basis.chunks_exact(w).zip(out.iter_mut()) {
                    let mut v = 0.0;
                    for k in 0..w {
                        v += row[k] * coef[k];
                    }
                    *o = v;
                }
            }
            Fit::Bins { assignment, counts } => {
                let mut sums = vec![0.0; counts.len()];
                for (&b, &y) in assignment.iter().zip(target) {
                    sums[b] += y;
                }
                for (o, &b) in out.iter_mut().zip(assignment) {
                    *o = sums[b] / counts[b] as f64;
                }
            }
        }
    }
}

fn fallback_bins(rows: usize) -> usize {
    (rows / 200).clamp(1, 64)
}

fn active_coordinates(features: &[f64], dim: usize) -> Vec<usize> {
    (0..dim)
        .filter(|&k| {
            let first = features[k];
            features.iter().skip(k).step_by(dim).any(|&v| v != first)
        })
        .collect()
}

/// Exponent vectors of total degree `1..=degree` over `vars` variables,
/// graded then lexicographic.
fn monomials(vars: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for total in 1..=degree {
        let mut current = vec![0usize; vars];
        push_compositions(&mut out, &mut current, 0, total);
    }
    out
}

fn push_compositions(out: &mut Vec<Vec<usize>>, current: &mut Vec<usize>, pos: usize, left: usize) {
    if pos + 1 == current.len() {
        current[pos] = left;
        out.push(current.clone());
        return;
    }
    for e in (0..=left).rev() {
        current[pos] = e;
        push_compositions(out, current, pos + 1, left - e);
    }
}

fn poly_fit(features: &[f64], dim: usize, active: &[usize], degree: usize) -> Option<Fit> {
    let rows = features.len() / dim;
    let exps = monomials(active.len(), degree);
    let width = (exps.len() + 1).min(rows);
    let exps = &exps[..width - 1];

    let mut centre = vec![0.0; active.len()];
    let mut scale = vec![0.0; active.len()];
    for (a, &k) in active.iter().enumerate() {
        let col = features.iter().skip(k).step_by(dim);
        let mean = col.clone().sum::<f64>() / rows as f64;
        let var = col.map(|v| (v - mean) * (v - mean)).sum::<f64>() / rows as f64;
        centre[a] = mean;
        scale[a] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }

    let mut basis = vec![0.0; rows * width];
    let mut z = vec![0.0; active.len()];
    for (row, b) in features.chunks_exact(dim).zip(basis.chunks_exact_mut(width)) {
        for (a, &k) in active.iter().enumerate() {
            z[a] = (row[k] - centre[a]) / scale[a];
        }
        b[0] = 1.0;
        for (slot, e) in b[1..].iter_mut().zip(exps) {
            *slot = e.iter().zip(&z).map(|(&p, &v)| v.powi(p as i32)).product();
        }
    }

    let mut gram = DMatrix::<f64>::zeros(width, width);
    for b in basis.chunks_exact(width) {
        for i in 0..width {
            for j in i..width {
                gram[(i, j)] += b[i] * b[j];
            }
        }
    }
    for i in 0..width {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
    }
    let chol = Cholesky::new(gram)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    if !(lo > 0.0) || (lo / hi).powi(2) < MIN_RCOND {
        return None;
    }
    Some(Fit::Poly { basis, width, chol })
}

fn bin_fit(features: &[f64], dim: usize, bins: usize) -> Fit {
    let rows = features.len() / dim;
    let bins = bins.clamp(1, rows);
    let mut order: Vec<usize> = (0..rows).collect();
    order.sort_by(|&a, &b| features[a * dim].total_cmp(&features[b * dim]).then(a.cmp(&b)));
    let mut assignment = vec![0usize; rows];
    let mut counts = vec![0usize; bins];
    for (rank, &row) in order.iter().enumerate() {
        let b = rank * bins / rows;
        assignment[row] = b;
        counts[b] += 1;
    }
    Fit::Bins { assignment, counts }
}
