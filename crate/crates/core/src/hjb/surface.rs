use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use super::SpaceTimeGrid;
use crate::error::{Error, Result};
use crate::model::examples::{classical_value, viscosity_value};

pub const CANDIDATE_NAMES: [&str; 2] = ["candidate-classical", "candidate-viscosity"];

/// Closed-form evaluator `(t, x) -> W(t, x)`.
pub type SurfaceFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Computed { model: String, scheme: String },
    Candidate { name: String },
}

/// Finite-difference derivatives at a grid node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Derivatives {
    pub wt: f64,
    pub wx: f64,
    pub wxx: f64,
}

/// Scalar value function sampled on a [`SpaceTimeGrid`], time rows first.
#[derive(Clone)]
pub struct ValueSurface {
    grid: SpaceTimeGrid,
    values: Vec<f64>,
    provenance: Provenance,
    exact: Option<SurfaceFn>,
    kinks: Vec<f64>,
}

impl fmt::Debug for ValueSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ValueSurface")
            .field("grid", &self.grid)
            .field("provenance", &self.provenance)
            .field("exact", &self.exact.is_some())
            .field("kinks", &self.kinks)
            .finish_non_exhaustive()
    }
}

impl ValueSurface {
    pub fn from_values(grid: SpaceTimeGrid, values: Vec<f64>, provenance: Provenance, kinks: Vec<f64>) -> Result<Self> {
        let expected = (grid.nt() + 1) * (grid.nx() + 1);
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "surface has {} values, grid needs {expected}",
                values.len()
            )));
        }
        Ok(Self {
            grid,
            values,
            provenance,
            exact: None,
            kinks,
        })
    }

    /// Sample a closed form on the grid and keep it for off-grid evaluation.
    pub fn from_closed_form(grid: SpaceTimeGrid, name: impl Into<String>, f: SurfaceFn, kinks: Vec<f64>) -> Self {
        let mut values = Vec::with_capacity((grid.nt() + 1) * (grid.nx() + 1));
        for i in 0..=grid.nt() {
            for j in 0..=grid.nx() {
                values.push(f(grid.t(i), grid.x(j)));
            }
        }
        Self {
            grid,
            values,
            provenance: Provenance::Candidate { name: name.into() },
            exact: Some(f),
            kinks,
        }
    }

    /// Built-in closed-form candidates: `candidate-classical` is
    /// `x e^{2T-2t}`, `candidate-viscosity` is the kinked value function
    /// with a kink along `x = 0`.
    pub fn candidate(name: &str, grid: SpaceTimeGrid) -> Result<Self> {
        let horizon = grid.horizon();
        match name {
            "candidate-classical" => Ok(Self::from_closed_form(
                grid,
                name,
                Arc::new(move |t, x| classical_value(horizon, t, x)),
                Vec::new(),
            )),
            "candidate-viscosity" => Ok(Self::from_closed_form(
                grid,
                name,
                Arc::new(move |t, x| viscosity_value(horizon, t, x)),
                vec![0.0],
            )),
            other => Err(Error::InvalidInput(format!(
                "unknown candidate surface '{other}' (known: {})",
                CANDIDATE_NAMES.join(", ")
            ))),
        }
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn has_closed_form(&self) -> bool {
        self.exact.is_some()
    }

    pub fn kinks(&self) -> &[f64] {
        &self.kinks
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * (self.grid.nx() + 1) + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.grid.nx() + 1;
        &self.values[i * w..(i + 1) * w]
    }

    /// `W(t, x)`: the closed form when present, otherwise bilinear
    /// interpolation with the point clamped into the grid box.
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        if let Some(f) = &self.exact {
            return f(t, x);
        }
        let g = &self.grid;
        let ts = (t.clamp(0.0, g.horizon()) / g.dt()).min(g.nt() as f64);
        let xs = ((x.clamp(g.x_lo(), g.x_hi()) - g.x_lo()) / g.dx()).min(g.nx() as f64);
        let i0 = (ts.floor() as usize).min(g.nt() - 1);
        let j0 = (xs.floor() as usize).min(g.nx() - 1);
        let (a, b) = (ts - i0 as f64, xs - j0 as f64);
        let w00 = self.value(i0, j0);
        let w01 = self.value(i0, j0 + 1);
        let w10 = self.value(i0 + 1, j0);
        let w11 = self.value(i0 + 1, j0 + 1);
        (1.0 - a) * ((1.0 - b) * w00 + b * w01) + a * ((1.0 - b) * w10 + b * w11)
    }

    /// Column `j` lies within half a cell of a declared kink.
    pub fn is_kink_column(&self, j: usize) -> bool {
        let x = self.grid.x(j);
        let half = 0.5 * self.grid.dx();
        self.kinks.iter().any(|k| (x - k).abs() <= half)
    }

    pub fn kink_columns(&self) -> Vec<usize> {
        (0..=self.grid.nx()).filter(|&j| self.is_kink_column(j)).collect()
    }

    /// `W_t`: central in time, one-sided on the first and last rows.
    pub fn time_derivative(&self, i: usize, j: usize) -> f64 {
        let (nt, dt) = (self.grid.nt(), self.grid.dt());
        if i == 0 {
            (self.value(1, j) - self.value(0, j)) / dt
        } else if i == nt {
            (self.value(nt, j) - self.value(nt - 1, j)) / dt
        } else {
            (self.value(i + 1, j) - self.value(i - 1, j)) / (2.0 * dt)
        }
    }

    /// `W_x`: central inside, second-order one-sided at the box edges.
    /// At a kink column this is the midpoint of the one-sided slopes.
    pub fn slope(&self, i: usize, j: usize) -> f64 {
        let (nx, dx) = (self.grid.nx(), self.grid.dx());
        let w = self.row(i);
        if j == 0 {
            (-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * dx)
        } else if j == nx {
            (3.0 * w[nx] - 4.0 * w[nx - 1] + w[nx - 2]) / (2.0 * dx)
        } else {
            (w[j + 1] - w[j - 1]) / (2.0 * dx)
        }
    }

    /// Backward and forward first differences `(left, right)`; at an edge
    /// the missing side repeats the available one.
    pub fn one_sided_slopes(&self, i: usize, j: usize) -> (f64, f64) {
        let (nx, dx) = (self.grid.nx(), self.grid.dx());
        let w = self.row(i);
        let left = (j > 0).then(|| (w[j] - w[j - 1]) / dx);
        let right = (j < nx).then(|| (w[j + 1] - w[j]) / dx);
        match (left, right) {
            (Some(l), Some(r)) => (l, r),
            (Some(l), None) => (l, l),
            (None, Some(r)) => (r, r),
            (None, None) => unreachable!("grid has at least three columns"),
        }
    }

    /// `W_xx`, refused at kink columns.
    pub fn curvature(&self, i: usize, j: usize) -> Result<f64> {
        if self.is_kink_column(j) {
            return Err(Error::KinkColumn {
                column: j,
                x: self.grid.x(j),
            });
        }
        Ok(self.raw_curvature(i, j))
    }

    /// Second difference without the kink guard.
    pub fn raw_curvature(&self, i: usize, j: usize) -> f64 {
        let (nx, dx) = (self.grid.nx(), self.grid.dx());
        let w = self.row(i);
        let dx2 = dx * dx;
        if nx >= 3 && j == 0 {
            (2.0 * w[0] - 5.0 * w[1] + 4.0 * w[2] - w[3]) / dx2
        } else if nx >= 3 && j == nx {
            (2.0 * w[nx] - 5.0 * w[nx - 1] + 4.0 * w[nx - 2] - w[nx - 3]) / dx2
        } else {
            let j = j.clamp(1, nx - 1);
            (w[j + 1] - 2.0 * w[j] + w[j - 1]) / dx2
        }
    }

    pub fn derivatives(&self, i: usize, j: usize) -> Result<Derivatives> {
        Ok(Derivatives {
            wt: self.time_derivative(i, j),
            wx: self.slope(i, j),
            wxx: self.curvature(i, j)?,
        })
    }

    /// CSV matrix: a metadata comment, a header of state nodes, then one
    /// row per time node.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let g = &self.grid;
        let source = match &self.provenance {
            Provenance::Computed { model, scheme } => format!("model={model} scheme={scheme}"),
            Provenance::Candidate { name } => format!("candidate={name}"),
        };
        writeln!(
            w,
            "# {source} T={} nt={} x_lo={} x_hi={} nx={} kinks={:?}",
            g.horizon(),
            g.nt(),
            g.x_lo(),
            g.x_hi(),
            g.nx(),
            self.kinks
        )?;
        write!(w, "t")?;
        for j in 0..=g.nx() {
            write!(w, ",{}", g.x(j))?;
        }
        writeln!(w)?;
        for i in 0..=g.nt() {
            write!(w, "{}", g.t(i))?;
            for v in self.row(i) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SpaceTimeGrid {
        SpaceTimeGrid::new(1.0, 10, -1.0, 1.0, 20).unwrap()
    }

    #[test]
    fn derivatives_of_quadratic_are_exact() {
        let s = ValueSurface::from_closed_form(
            grid(),
            "quad",
            Arc::new(|t, x| 2.0 * t + 3.0 * x + 0.5 * x * x),
            Vec::new(),
        );
        for j in 0..=20 {
            let x = grid().x(j);
            let d = s.derivatives(4, j).unwrap();
            assert!((d.wt - 2.0).abs() < 1e-10);
            assert!((d.wx - (3.0 + x)).abs() < 1e-10);
            assert!((d.wxx - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn kink_column_refuses_curvature() {
        let s = ValueSurface::candidate("candidate-viscosity", grid()).unwrap();
        assert_eq!(s.kink_columns(), vec![10]);
        assert!(matches!(s.curvature(3, 10), Err(Error::KinkColumn { column: 10, .. })));
        let (l, r) = s.one_sided_slopes(3, 10);
        assert!((l - (3.0 * 0.7f64).exp()).abs() < 1e-9);
        assert!((r - 1.0).abs() < 1e-12);
        assert!((s.slope(3, 10) - 0.5 * (l + r)).abs() < 1e-12);
    }

    #[test]
    fn bilinear_eval_reproduces_nodes() {
        let exact = ValueSurface::candidate("candidate-classical", grid()).unwrap();
        let table = ValueSurface::from_values(
            grid(),
            exact.values().to_vec(),
            Provenance::Candidate { name: "copy".into() },
            Vec::new(),
        )
        .unwrap();
        assert_eq!(table.eval(0.3, 0.5), exact.value(3, 15));
        assert_eq!(table.eval(5.0, 9.0), exact.value(10, 20));
    }

    #[test]
    fn unknown_candidate_rejected() {
        assert!(ValueSurface::candidate("nope", grid()).is_err());
    }

    #[test]
    fn csv_layout() {
        let g = SpaceTimeGrid::new(1.0, 2, 0.0, 1.0, 2).unwrap();
        let s = ValueSurface::from_closed_form(g, "lin", Arc::new(|_, x| x), Vec::new());
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[1], "t,0,0.5,1");
        assert_eq!(lines[2], "0,0,0.5,1");
        assert_eq!(lines.len(), 5);
    }
}
