use serde::Serialize;

use crate::error::{Error, Result};

const MEMBERSHIP_SLACK: f64 = 1e-12;

/// Compact control set realised as a product of closed intervals, together
/// with the finite grid used for every infimum and argmin over controls.
///
/// Grid points are enumerated in lexicographic order (first coordinate
/// slowest), so the first minimiser found in a scan is the lexicographically
/// smallest one.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControlSet {
    bounds: Vec<(f64, f64)>,
    grid_points: Vec<usize>,
    #[serde(skip)]
    points: Vec<f64>,
}

impl ControlSet {
    pub fn new(bounds: Vec<(f64, f64)>, grid_points: Vec<usize>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidInput("control set needs at least one coordinate".into()));
        }
        if bounds.len() != grid_points.len() {
            return Err(Error::InvalidInput(format!(
                "{} control intervals but {} grid sizes",
                bounds.len(),
                grid_points.len()
            )));
        }
        for (k, (&(lo, hi), &n)) in bounds.iter().zip(&grid_points).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(Error::InvalidInput(format!(
                    "control coordinate {k}: interval [{lo}, {hi}] is not a nonempty compact interval"
                )));
            }
            let degenerate = lo == hi;
            if n == 0 || (!degenerate && n < 2) {
                return Err(Error::InvalidInput(format!(
                    "control coordinate {k}: {n} grid points (need >= 2 on a nondegenerate interval)"
                )));
            }
        }
        let grid_points: Vec<usize> = bounds
            .iter()
            .zip(&grid_points)
            .map(|(&(lo, hi), &n)| if lo == hi { 1 } else { n })
            .collect();

        let dim = bounds.len();
        let total: usize = grid_points.iter().product();
        let mut points = Vec::with_capacity(total * dim);
        let mut counter = vec![0usize; dim];
        for _ in 0..total {
            for k in 0..dim {
                let (lo, hi) = bounds[k];
                let n = grid_points[k];
                let v = if n == 1 {
                    lo
                } else if counter[k] == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * counter[k] as f64 / (n - 1) as f64
                };
                points.push(v);
            }
            for k in (0..dim).rev() {
                counter[k] += 1;
                if counter[k] < grid_points[k] {
                    break;
                }
                counter[k] = 0;
            }
        }
        Ok(Self {
            bounds,
            grid_points,
            points,
        })
    }

    /// One-dimensional control set `[lo, hi]` with `points` grid nodes.
    pub fn interval(lo: f64, hi: f64, points: usize) -> Result<Self> {
        Self::new(vec![(lo, hi)], vec![points])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn grid_points(&self) -> &[usize] {
        &self.grid_points
    }

    /// Number of grid controls.
    pub fn len(&self) -> usize {
        self.points.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.points[k * d..(k + 1) * d]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim())
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u.iter().zip(&self.bounds).all(|(&v, &(lo, hi))| {
                let slack = MEMBERSHIP_SLACK * (1.0 + lo.abs().max(hi.abs()));
                v >= lo - slack && v <= hi + slack
            })
    }

    /// Clamp every coordinate into its interval.
    pub fn project(&self, u: &mut [f64]) {
        for (v, &(lo, hi)) in u.iter_mut().zip(&self.bounds) {
            *v = v.clamp(lo, hi);
        }
    }

    pub fn lower(&self) -> Vec<f64> {
        self.bounds.iter().map(|b| b.0).collect()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.bounds.iter().map(|b| b.1).collect()
    }

    /// Largest coordinate width `max_k (hi_k - lo_k)`.
    pub fn diameter(&self) -> f64 {
        self.bounds.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max)
    }
}
