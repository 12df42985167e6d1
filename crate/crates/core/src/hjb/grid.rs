use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid on `[0, T] × [x_lo, x_hi]` with `nt + 1` time rows and
/// `nx + 1` state columns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    horizon: f64,
    nt: usize,
    x_lo: f64,
    x_hi: f64,
    nx: usize,
}

impl SpaceTimeGrid {
    pub fn new(horizon: f64, nt: usize, x_lo: f64, x_hi: f64, nx: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidInput(format!(
                "grid horizon must be positive, got {horizon}"
            )));
        }
        if nt < 2 || nx < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2 intervals per axis, got nt = {nt}, nx = {nx}"
            )));
        }
        if !(x_lo.is_finite() && x_hi.is_finite()) || x_lo >= x_hi {
            return Err(Error::InvalidInput(format!("state box [{x_lo}, {x_hi}] is degenerate")));
        }
        Ok(Self {
            horizon,
            nt,
            x_lo,
            x_hi,
            nx,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn nt(&self) -> usize {
        self.nt
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn x_lo(&self) -> f64 {
        self.x_lo
    }

    pub fn x_hi(&self) -> f64 {
        self.x_hi
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.nx as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        if i == self.nt {
            self.horizon
        } else {
            self.horizon * i as f64 / self.nt as f64
        }
    }

    pub fn x(&self, j: usize) -> f64 {
        if j == self.nx {
            self.x_hi
        } else {
            self.x_lo + (self.x_hi - self.x_lo) * j as f64 / self.nx as f64
        }
    }

    /// Index of the nearest time row, clamped to the grid.
    pub fn nearest_t(&self, t: f64) -> usize {
        let k = (t / self.dt()).round();
        k.clamp(0.0, self.nt as f64) as usize
    }

    /// Index of the nearest state column, clamped to the box.
    pub fn nearest_x(&self, x: f64) -> usize {
        let k = ((x - self.x_lo) / self.dx()).round();
        if k.is_nan() {
            return 0;
        }
        k.clamp(0.0, self.nx as f64) as usize
    }

    pub fn contains(&self, t: f64, x: f64) -> bool {
        (0.0..=self.horizon).contains(&t) && (self.x_lo..=self.x_hi).contains(&x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_and_spacing() {
        let g = SpaceTimeGrid::new(1.0, 4, -1.0, 1.0, 4).unwrap();
        assert_eq!(g.dt(), 0.25);
        assert_eq!(g.dx(), 0.5);
        assert_eq!(g.x(2), 0.0);
        assert_eq!(g.t(4), 1.0);
        assert_eq!(g.nearest_x(0.3), 3);
        assert_eq!(g.nearest_x(9.0), 4);
        assert_eq!(g.nearest_t(-1.0), 0);
    }

    #[test]
    fn rejects_degenerate() {
        assert!(SpaceTimeGrid::new(1.0, 1, 0.0, 1.0, 4).is_err());
        assert!(SpaceTimeGrid::new(1.0, 4, 1.0, 1.0, 4).is_err());
        assert!(SpaceTimeGrid::new(0.0, 4, 0.0, 1.0, 4).is_err());
    }
}
