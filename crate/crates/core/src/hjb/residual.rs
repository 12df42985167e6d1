use serde::Serialize;

use super::hamiltonian::inf_hamiltonian1;
use super::{SpaceTimeGrid, ValueSurface};
use crate::error::{Error, Result};
use crate::model::ControlModel;

/// `max{W - h, -W_t - inf_u H}` at interior nodes. Entries are `None` on
/// the boundary rows and columns and on kink columns, where `W_xx` is not
/// available.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualField {
    grid: SpaceTimeGrid,
    values: Vec<Option<f64>>,
}

impl ResidualField {
    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * (self.grid.nx() + 1) + j]
    }

    /// `(i, j, residual)` for every evaluated node.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let w = self.grid.nx() + 1;
        self.values
            .iter()
            .enumerate()
            .filter_map(move |(k, v)| v.map(|r| (k / w, k % w, r)))
    }

    /// Largest `|residual|` over nodes accepted by `keep(t, x)`.
    pub fn max_abs_where(&self, keep: impl Fn(f64, f64) -> bool) -> f64 {
        self.iter()
            .filter(|&(i, j, _)| keep(self.grid.t(i), self.grid.x(j)))
            .map(|(_, _, r)| r.abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.max_abs_where(|_, _| true)
    }

    /// Largest positive residual; a solution has none beyond discretization
    /// error.
    pub fn max_positive(&self) -> f64 {
        self.iter().map(|(_, _, r)| r.max(0.0)).fold(0.0, f64::max)
    }

    /// CSV matrix in the surface layout with blanks where no value exists.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let g = &self.grid;
        write!(w, "t")?;
        for j in 0..=g.nx() {
            write!(w, ",{}", g.x(j))?;
        }
        writeln!(w)?;
        for i in 0..=g.nt() {
            write!(w, "{}", g.t(i))?;
            for j in 0..=g.nx() {
                match self.get(i, j) {
                    Some(v) => write!(w, ",{v}")?,
                    None => write!(w, ",")?,
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn residual(surface: &ValueSurface, model: &ControlModel) -> Result<ResidualField> {
    if !model.is_scalar() || model.control_dim() != 1 {
        return Err(Error::Dimension("residual is implemented for scalar models".into()));
    }
    let g = *surface.grid();
    let (nt, nx) = (g.nt(), g.nx());
    let mut values = vec![None; (nt + 1) * (nx + 1)];
    for i in 1..nt {
        let t = g.t(i);
        for j in 1..nx {
            if surface.is_kink_column(j) {
                continue;
            }
            let x = g.x(j);
            let w = surface.value(i, j);
            let d = surface.derivatives(i, j)?;
            let (inf, _) = inf_hamiltonian1(model, t, x, w, d.wx, d.wxx);
            let r = (w - model.h1(t, x)).max(-d.wt - inf);
            if !r.is_finite() {
                return Err(Error::NonFinite {
                    what: "residual".into(),
                    location: format!("t = {t}, x = {x}"),
                });
            }
            values[i * (nx + 1) + j] = Some(r);
        }
    }
    Ok(ResidualField { grid: g, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::examples::{example_classical, example_viscosity, zero_model, ExampleConfig};

    #[test]
    fn zero_surface_has_zero_residual() {
        let m = zero_model(&ExampleConfig::default()).unwrap();
        let g = SpaceTimeGrid::new(1.0, 10, -1.0, 1.0, 10).unwrap();
        let s = ValueSurface::from_values(
            g,
            vec![0.0; 121],
            super::super::Provenance::Candidate { name: "zero".into() },
            Vec::new(),
        )
        .unwrap();
        let r = residual(&s, &m).unwrap();
        // W - h = -1 and the PDE branch is 0.
        assert_eq!(r.max_abs(), 0.0);
        assert_eq!(r.iter().count(), 9 * 9);
    }

    #[test]
    fn classical_candidate_residual_is_discretization_size() {
        let m = example_classical(&ExampleConfig::default()).unwrap();
        let g = SpaceTimeGrid::new(1.0, 200, 0.1, 5.0, 50).unwrap();
        let s = ValueSurface::candidate("candidate-classical", g).unwrap();
        let r = residual(&s, &m).unwrap();
        // central W_t error: W_ttt Δt² / 6 = 8 W Δt² / 6
        let bound = 8.0 * 5.0 * 2f64.exp() * g.dt() * g.dt() / 6.0 * 1.01;
        assert!(r.max_abs() <= bound, "{} > {bound}", r.max_abs());
    }

    #[test]
    fn viscosity_candidate_residual_vanishes_off_kink() {
        let m = example_viscosity(&ExampleConfig::default()).unwrap();
        let g = SpaceTimeGrid::new(1.0, 200, -5.0, 5.0, 100).unwrap();
        let s = ValueSurface::candidate("candidate-viscosity", g).unwrap();
        let r = residual(&s, &m).unwrap();
        assert!(r.get(50, 50).is_none());
        let right = r.max_abs_where(|_, x| x > g.dx() * 1.5);
        assert!(right < 1e-10, "{right}");
        let dt2 = g.dt() * g.dt();
        let left = r.max_abs_where(|_, x| x < -g.dx() * 1.5);
        // 27 |x| e^{3T} Δt² / 6 bounds the central time-difference error.
        assert!(left < 27.0 * 5.0 * 3f64.exp() * dt2 / 6.0 * 1.01, "{left}");
    }
}
