use serde::Serialize;

use crate::error::{Error, Result};
use crate::hjb::ValueSurface;

/// Grid estimates of the (D1) time-Lipschitz and (D2) semiconcavity
/// constants on `[0, T − δ]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularityReport {
    pub delta: f64,
    /// `max |W(t, x) − W(t′, x)| / ((1 + |x|)|t − t′|)`.
    pub c1: f64,
    /// `(t, x)` of the worst D1 quotient.
    pub c1_location: (f64, f64),
    pub d1_finite: bool,
    /// Half the largest positive second difference off kink columns.
    pub c2: f64,
    pub max_second_difference: f64,
    /// Largest second difference on a kink column, `-inf` if none.
    pub kink_second_difference: f64,
    /// Every second difference, kinks included, is at most `2·C2`.
    pub d2_pass: bool,
}

pub fn check_d1_d2(surface: &ValueSurface, delta: f64) -> Result<RegularityReport> {
    let g = surface.grid();
    if !(delta > 0.0 && delta < g.horizon()) {
        return Err(Error::InvalidInput(format!(
            "delta must lie in (0, {}), got {delta}",
            g.horizon()
        )));
    }
    let last = (0..=g.nt())
        .take_while(|&i| g.t(i) <= g.horizon() - delta + 1e-12 * g.horizon())
        .last()
        .unwrap_or(0);
    // the largest quotient over all row pairs is attained by adjacent rows
    let mut c1 = 0.0f64;
    let mut c1_location = (g.t(0), g.x(0));
    for i in 0..last {
        for j in 0..=g.nx() {
            let x = g.x(j);
            let q = (surface.value(i + 1, j) - surface.value(i, j)).abs() / ((1.0 + x.abs()) * g.dt());
            if q > c1 || q.is_nan() {
                c1 = q;
                c1_location = (g.t(i), x);
            }
        }
    }
    let dx2 = g.dx() * g.dx();
    let mut smooth = f64::NEG_INFINITY;
    let mut kink = f64::NEG_INFINITY;
    for i in 0..=last {
        let w = surface.row(i);
        for j in 1..g.nx() {
            let sd = (w[j + 1] - 2.0 * w[j] + w[j - 1]) / dx2;
            let slot = if surface.is_kink_column(j) {
                &mut kink
            } else {
                &mut smooth
            };
            if sd > *slot || sd.is_nan() {
                *slot = sd;
            }
        }
    }
    let c2 = 0.5 * smooth.max(0.0);
    Ok(RegularityReport {
        delta,
        c1,
        c1_location,
        d1_finite: c1.is_finite(),
        c2,
        max_second_difference: smooth,
        kink_second_difference: kink,
        d2_pass: c2.is_finite() && smooth <= 2.0 * c2 && (kink <= 2.0 * c2 || kink == f64::NEG_INFINITY),
    })
}
