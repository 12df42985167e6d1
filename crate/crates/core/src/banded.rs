//! Banded Gaussian elimination with partial pivoting, sized for the
//! few-diagonal systems of implicit finite-difference steps.

use crate::error::{Error, Result};

/// Square matrix with `kl` sub- and `ku` super-diagonals. Each row keeps
/// `kl` extra columns on the right for fill-in created by row swaps.
pub(crate) struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    fn slot(&self, row: usize, col: usize) -> usize {
        debug_assert!(col + self.kl >= row && col <= row + self.ku + self.kl);
        row * self.width + col + self.kl - row
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        assert!(
            col + self.kl >= row && col <= row + self.ku,
            "entry ({row}, {col}) outside the band"
        );
        let s = self.slot(row, col);
        self.data[s] = v;
    }

    pub fn add(&mut self, row: usize, col: usize, v: f64) {
        assert!(
            col + self.kl >= row && col <= row + self.ku,
            "entry ({row}, {col}) outside the band"
        );
        let s = self.slot(row, col);
        self.data[s] += v;
    }

    fn get(&self, row: usize, col: usize) -> f64 {
        self.data[self.slot(row, col)]
    }

    /// Solve `A x = rhs` in place, consuming the factorization.
    pub fn solve_in_place(mut self, rhs: &mut [f64]) -> Result<()> {
        let n = self.n;
        let reach = self.ku + self.kl;
        for k in 0..n {
            let last = (k + self.kl).min(n - 1);
            let mut pivot = k;
            let mut best = self.get(k, k).abs();
            for r in k + 1..=last {
                let v = self.get(r, k).abs();
                if v > best {
                    best = v;
                    pivot = r;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return Err(Error::InvalidInput(format!("singular banded system at row {k}")));
            }
            let cmax = (k + reach).min(n - 1);
            if pivot != k {
                for c in k..=cmax {
                    let (a, b) = (self.slot(k, c), self.slot(pivot, c));
                    self.data.swap(a, b);
                }
                rhs.swap(k, pivot);
            }
            let diag = self.get(k, k);
            for r in k + 1..=last {
                let l = self.get(r, k) / diag;
                if l == 0.0 {
                    continue;
                }
                for c in k..=cmax {
                    let v = self.get(k, c);
                    let s = self.slot(r, c);
                    self.data[s] -= l * v;
                }
                rhs[r] -= l * rhs[k];
            }
        }
        for k in (0..n).rev() {
            let cmax = (k + reach).min(n - 1);
            let mut acc = rhs[k];
            for (c, v) in rhs.iter().enumerate().take(cmax + 1).skip(k + 1) {
                acc -= self.get(k, c) * v;
            }
            rhs[k] = acc / self.get(k, k);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn matches_dense_solve_with_pivoting() {
        let n = 12;
        let (kl, ku) = (3, 3);
        let mut band = BandedMatrix::zeros(n, kl, ku);
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(kl)..=(i + ku).min(n - 1) {
                // small diagonal forces row swaps
                let v = if i == j {
                    0.01
                } else {
                    ((i * 7 + j * 3) % 5) as f64 - 2.0
                };
                band.set(i, j, v);
                dense[(i, j)] = v;
            }
        }
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let expected = dense.lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
        let mut x = rhs;
        band.solve_in_place(&mut x).unwrap();
        for i in 0..n {
            assert!((x[i] - expected[i]).abs() < 1e-9, "{i}");
        }
    }

    #[test]
    fn singular_system_is_reported() {
        let band = BandedMatrix::zeros(3, 1, 1);
        assert!(band.solve_in_place(&mut [1.0, 2.0, 3.0]).is_err());
    }
}
