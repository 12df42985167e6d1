//! Sampled checks of the standing assumptions on a [`ControlModel`].
//!
//! Lipschitz constants are estimated by difference quotients over random
//! point pairs in a probe box. Each pair perturbs one argument group at a
//! time, so the reported constant for `f` matches the sum-norm form
//! `C(|x-x'| + |y-y'| + |z-z'|)`. Nothing here is a proof.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ControlModel;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Unchecked,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SamplePoint {
    pub r: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SubCheck {
    pub name: String,
    pub status: Status,
    pub value: f64,
    pub worst: Option<SamplePoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionEntry {
    /// One of `H1`, `H2`, `H3`, `A1`, `A2`, `A3`, `A4`.
    pub name: &'static str,
    pub status: Status,
    /// Largest measured Lipschitz-type constant among the sub-checks.
    pub constant: Option<f64>,
    pub worst: Option<SamplePoint>,
    pub checks: Vec<SubCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub declared: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub model: String,
    pub seed: u64,
    pub entries: Vec<AssumptionEntry>,
}

impl AssumptionReport {
    pub fn entry(&self, name: &str) -> Option<&AssumptionEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn check(&self, entry: &str, check: &str) -> Option<&SubCheck> {
        self.entry(entry)?.checks.iter().find(|c| c.name == check)
    }

    /// True when no measured assumption failed.
    pub fn all_measured_pass(&self) -> bool {
        self.entries.iter().all(|e| e.status != Status::Fail)
    }
}

/// Box in time × state × control over which coefficients are probed, plus
/// the ranges used for the BSDE arguments `y` and `z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeBox {
    pub time: (f64, f64),
    pub state: Vec<(f64, f64)>,
    /// Defaults to the control set's bounding box.
    #[serde(default)]
    pub control: Option<Vec<(f64, f64)>>,
    #[serde(default = "default_yz")]
    pub y: (f64, f64),
    #[serde(default = "default_yz")]
    pub z: (f64, f64),
    /// Random point pairs per argument group.
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Grid points per state coordinate for the terminal-obstacle sweep.
    #[serde(default = "default_sweep")]
    pub sweep: usize,
    /// Quotients above this bound count as unbounded.
    #[serde(default = "default_ceiling")]
    pub ceiling: f64,
    /// Relative step for local pairs, as a fraction of each box width.
    #[serde(default = "default_local")]
    pub local_step: f64,
}

fn default_yz() -> (f64, f64) {
    (-5.0, 5.0)
}
fn default_samples() -> usize {
    2000
}
fn default_sweep() -> usize {
    201
}
fn default_ceiling() -> f64 {
    1e6
}
fn default_local() -> f64 {
    1e-3
}

impl ProbeBox {
    pub fn new(time: (f64, f64), state: Vec<(f64, f64)>, control: Option<Vec<(f64, f64)>>) -> Self {
        Self {
            time,
            state,
            control,
            y: default_yz(),
            z: default_yz(),
            samples: default_samples(),
            sweep: default_sweep(),
            ceiling: default_ceiling(),
            local_step: default_local(),
        }
    }

    /// Scalar box `[t0, t1] × [x0, x1] × [u0, u1]`.
    pub fn scalar(time: (f64, f64), state: (f64, f64), control: (f64, f64)) -> Self {
        Self::new(time, vec![state], Some(vec![control]))
    }

    fn validate(&self, model: &ControlModel) -> Result<Vec<(f64, f64)>> {
        let ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
        if !ok(self.time) || self.time.0 < 0.0 || self.time.1 > model.horizon() {
            return Err(Error::InvalidInput(format!(
                "probe time range {:?} must lie in [0, {}]",
                self.time,
                model.horizon()
            )));
        }
        if self.state.len() != model.state_dim() || !self.state.iter().all(|&b| ok(b)) {
            return Err(Error::InvalidInput(format!(
                "probe state box needs {} finite intervals",
                model.state_dim()
            )));
        }
        let control = self
            .control
            .clone()
            .unwrap_or_else(|| model.control_set().bounds().to_vec());
        if control.len() != model.control_dim() || !control.iter().all(|&b| ok(b)) {
            return Err(Error::InvalidInput(format!(
                "probe control box needs {} finite intervals",
                model.control_dim()
            )));
        }
        if !ok(self.y) || !ok(self.z) || self.samples == 0 || self.sweep == 0 {
            return Err(Error::InvalidInput("probe y/z ranges or sample counts invalid".into()));
        }
        Ok(control)
    }
}

/// Measure the constants behind (H1)-(H3) and record the declared
/// (A1)-(A4) flags.
///
/// (H2) also carries the terminal-obstacle ordering `Φ(x) ≤ h(T, x)`; its
/// sub-check reports `max Φ - h(T, ·)` over the probed states with the
/// worst state.
pub fn validate_assumptions(model: &ControlModel, probe: &ProbeBox, seed: u64) -> Result<AssumptionReport> {
    let control = probe.validate(model)?;
    let mut prober = Prober {
        model,
        probe,
        control,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };

    let h1 = entry(
        "H1",
        vec![
            prober.lipschitz(
                "b, sigma continuity in (r, u)",
                Group::TimeControl,
                Coef::DriftDiffusion,
            ),
            prober.lipschitz("b, sigma Lipschitz in x", Group::State, Coef::DriftDiffusion),
        ],
    );
    let h2 = entry(
        "H2",
        vec![
            prober.lipschitz("f continuity in (r, u)", Group::TimeControl, Coef::Driver),
            prober.lipschitz("h continuity in r", Group::Time, Coef::Obstacle),
            prober.lipschitz("f Lipschitz in (x, y, z)", Group::StateYZ, Coef::Driver),
            prober.lipschitz("Phi Lipschitz", Group::State, Coef::Terminal),
            prober.lipschitz("h Lipschitz in x", Group::State, Coef::Obstacle),
            prober.terminal_below_obstacle(),
        ],
    );
    let h3 = entry(
        "H3",
        vec![
            prober.lipschitz("b, sigma Lipschitz in u", Group::Control, Coef::DriftDiffusion),
            prober.lipschitz("f Lipschitz in u", Group::Control, Coef::Driver),
        ],
    );
    let flags = model.structure();
    let declared = |name: &'static str, flag: Option<bool>| AssumptionEntry {
        name,
        status: Status::Unchecked,
        constant: None,
        worst: None,
        checks: Vec::new(),
        declared: flag,
    };
    Ok(AssumptionReport {
        model: model.name().to_string(),
        seed,
        entries: vec![
            h1,
            h2,
            h3,
            declared("A1", flags.a1),
            declared("A2", flags.a2),
            declared("A3", flags.a3),
            declared("A4", flags.a4),
        ],
    })
}

fn entry(name: &'static str, checks: Vec<SubCheck>) -> AssumptionEntry {
    let status = if checks.iter().any(|c| c.status == Status::Fail) {
        Status::Fail
    } else {
        Status::Pass
    };
    let lipschitz = checks.iter().filter(|c| c.name.contains("Lipschitz"));
    let constant = lipschitz.clone().map(|c| c.value).fold(None, |acc: Option<f64>, v| {
        Some(acc.map_or(v, |a| if v.is_nan() || v > a { v } else { a }))
    });
    let worst = checks
        .iter()
        .find(|c| c.status == Status::Fail)
        .or_else(|| lipschitz.max_by(|a, b| a.value.total_cmp(&b.value)))
        .and_then(|c| c.worst.clone());
    AssumptionEntry {
        name,
        status,
        constant,
        worst,
        checks,
        declared: None,
    }
}

#[derive(Clone, Copy)]
enum Group {
    Time,
    TimeControl,
    State,
    StateYZ,
    Control,
}

#[derive(Clone, Copy)]
enum Coef {
    DriftDiffusion,
    Driver,
    Terminal,
    Obstacle,
}

#[derive(Clone)]
struct Args {
    r: f64,
    x: Vec<f64>,
    u: Vec<f64>,
    y: f64,
    z: Vec<f64>,
}

struct Prober<'a> {
    model: &'a ControlModel,
    probe: &'a ProbeBox,
    control: Vec<(f64, f64)>,
    rng: ChaCha8Rng,
}

impl Prober<'_> {
    fn uniform(&mut self, (lo, hi): (f64, f64)) -> f64 {
        if lo == hi {
            lo
        } else {
            self.rng.random_range(lo..=hi)
        }
    }

    fn draw(&mut self) -> Args {
        let r = self.uniform(self.probe.time);
        let x = self.probe.state.clone().into_iter().map(|b| self.uniform(b)).collect();
        let u = self.control.clone().into_iter().map(|b| self.uniform(b)).collect();
        let y = self.uniform(self.probe.y);
        let z = (0..self.model.noise_dim())
            .map(|_| self.uniform(self.probe.z))
            .collect();
        Args { r, x, u, y, z }
    }

    /// Partner point differing from `a` only in the argument group, either
    /// a fresh uniform draw (global pair) or a small step (local pair).
    /// Returns the partner and the sum-norm distance between the two.
    fn partner(&mut self, a: &Args, group: Group, local: bool) -> (Args, f64) {
        let mut b = a.clone();
        let step = self.probe.local_step;
        let move_coord = |rng: &mut ChaCha8Rng, v: &mut f64, (lo, hi): (f64, f64)| {
            if lo == hi {
                return;
            }
            if local {
                let d = step * (hi - lo) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let moved = *v + d;
                *v = if moved < lo || moved > hi { *v - d } else { moved };
            } else {
                *v = rng.random_range(lo..=hi);
            }
        };
        let rng = &mut self.rng;
        match group {
            Group::Time => move_coord(rng, &mut b.r, self.probe.time),
            Group::TimeControl => {
                move_coord(rng, &mut b.r, self.probe.time);
                for (v, &bd) in b.u.iter_mut().zip(&self.control) {
                    move_coord(rng, v, bd);
                }
            }
            Group::State => {
                for (v, &bd) in b.x.iter_mut().zip(&self.probe.state) {
                    move_coord(rng, v, bd);
                }
            }
            Group::StateYZ => match rng.random_range(0..3) {
                0 => {
                    for (v, &bd) in b.x.iter_mut().zip(&self.probe.state) {
                        move_coord(rng, v, bd);
                    }
                }
                1 => move_coord(rng, &mut b.y, self.probe.y),
                _ => {
                    for v in b.z.iter_mut() {
                        move_coord(rng, v, self.probe.z);
                    }
                }
            },
            Group::Control => {
                for (v, &bd) in b.u.iter_mut().zip(&self.control) {
                    move_coord(rng, v, bd);
                }
            }
        }
        let dist = (a.r - b.r).abs() + euclid(&a.x, &b.x) + euclid(&a.u, &b.u) + (a.y - b.y).abs() + euclid(&a.z, &b.z);
        (b, dist)
    }

    fn evaluate(&self, coef: Coef, a: &Args, out: &mut Vec<f64>) {
        let m = self.model;
        out.clear();
        match coef {
            Coef::DriftDiffusion => {
                let (n, d) = (m.state_dim(), m.noise_dim());
                out.resize(n + n * d, 0.0);
                let (bo, so) = out.split_at_mut(n);
                m.drift(a.r, &a.x, &a.u, bo);
                m.diffusion(a.r, &a.x, &a.u, so);
            }
            Coef::Driver => out.push(m.driver(a.r, &a.x, a.y, &a.z, &a.u)),
            Coef::Terminal => out.push(m.terminal(&a.x)),
            Coef::Obstacle => out.push(m.obstacle(a.r, &a.x)),
        }
    }

    fn lipschitz(&mut self, name: &str, group: Group, coef: Coef) -> SubCheck {
        let mut worst_ratio = 0.0f64;
        let mut worst: Option<SamplePoint> = None;
        let mut non_finite: Option<SamplePoint> = None;
        let (mut va, mut vb) = (Vec::new(), Vec::new());
        for k in 0..self.probe.samples {
            let a = self.draw();
            let (b, dist) = self.partner(&a, group, k % 2 == 1);
            if dist == 0.0 {
                continue;
            }
            self.evaluate(coef, &a, &mut va);
            self.evaluate(coef, &b, &mut vb);
            let mut diff = 0.0;
            let mut bad = None;
            for (&p, &q) in va.iter().zip(&vb) {
                let both_absent = matches!(coef, Coef::Obstacle) && p == f64::INFINITY && q == p;
                if both_absent {
                    continue;
                }
                if !p.is_finite() {
                    bad = Some(&a);
                } else if !q.is_finite() {
                    bad = Some(&b);
                } else {
                    diff += (p - q) * (p - q);
                }
            }
            if let Some(at) = bad {
                non_finite.get_or_insert_with(|| sample_point(at, coef));
                continue;
            }
            let ratio = diff.sqrt() / dist;
            if ratio > worst_ratio || worst.is_none() {
                worst_ratio = ratio;
                worst = Some(sample_point(&a, coef));
            }
        }
        if let Some(point) = non_finite {
            return SubCheck {
                name: name.to_string(),
                status: Status::Fail,
                value: f64::NAN,
                worst: Some(point),
                note: Some("non-finite coefficient value".into()),
            };
        }
        let status = if worst_ratio <= self.probe.ceiling {
            Status::Pass
        } else {
            Status::Fail
        };
        SubCheck {
            name: name.to_string(),
            status,
            value: worst_ratio,
            worst,
            note: None,
        }
    }

    fn terminal_below_obstacle(&mut self) -> SubCheck {
        let t_end = self.model.horizon();
        let n = self.model.state_dim();
        let mut states: Vec<Vec<f64>> = Vec::new();
        if n == 1 {
            let (lo, hi) = self.probe.state[0];
            let k = self.probe.sweep.max(2);
            states.extend((0..k).map(|j| vec![lo + (hi - lo) * j as f64 / (k - 1) as f64]));
        }
        for _ in 0..self.probe.samples {
            let a = self.draw();
            states.push(a.x);
        }
        let mut worst_gap = f64::NEG_INFINITY;
        let mut worst = None;
        for x in states {
            let gap = self.model.terminal(&x) - self.model.obstacle(t_end, &x);
            if gap.is_nan() {
                return SubCheck {
                    name: "Phi <= h(T, .)".into(),
                    status: Status::Fail,
                    value: f64::NAN,
                    worst: Some(SamplePoint {
                        r: t_end,
                        x,
                        u: Vec::new(),
                        y: None,
                        z: None,
                    }),
                    note: Some("non-finite terminal or obstacle value".into()),
                };
            }
            if gap > worst_gap {
                worst_gap = gap;
                worst = Some(SamplePoint {
                    r: t_end,
                    x,
                    u: Vec::new(),
                    y: None,
                    z: None,
                });
            }
        }
        SubCheck {
            name: "Phi <= h(T, .)".into(),
            status: if worst_gap <= 0.0 { Status::Pass } else { Status::Fail },
            value: worst_gap,
            worst,
            note: (worst_gap > 0.0).then(|| "terminal value exceeds the obstacle".into()),
        }
    }
}

fn sample_point(a: &Args, coef: Coef) -> SamplePoint {
    let with_yz = matches!(coef, Coef::Driver);
    SamplePoint {
        r: a.r,
        x: a.x.clone(),
        u: a.u.clone(),
        y: with_yz.then_some(a.y),
        z: with_yz.then(|| a.z.clone()),
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}
