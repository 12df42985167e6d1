//! Feedback laws from pointwise Hamiltonian minimisation on a value surface.
//!
//! At node `(t_i, x_j)` the law takes the canonical minimizer of
//! `u ↦ ℍ(t_i, x_j, W, W_x, W_xx, u)` over the control grid. At declared kink
//! columns `W_x` is replaced by the midpoint of the one-sided slopes and `W_xx`
//! by 0.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hjb::{inf_hamiltonian1, SpaceTimeGrid, ValueSurface};
use crate::model::{ControlModel, ControlSet};
use crate::rbsde::{estimate_reflected, Estimate, SolverConfig};
use crate::simulate::{simulate_closed_loop, FeedbackPolicy, TimeGrid};

/// How a law is evaluated between grid nodes. Outside the grid box the
/// nearest edge value is used in both modes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    /// Value at the nearest node; stays inside the discrete argmin set.
    #[default]
    Nearest,
    /// Bilinear in `(t, x)`, then projected onto `U`.
    Bilinear,
}

impl Interpolation {
    fn as_str(self) -> &'static str {
        match self {
            Interpolation::Nearest => "nearest",
            Interpolation::Bilinear => "bilinear",
        }
    }
}

/// Identifier of the argmin selection rule written to law files.
pub const TIE_BREAK: &str = "lexicographic-smallest";

/// Where a law table came from.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LawProvenance {
    /// Description of the source surface, or `"constant"`/`"imported"`.
    pub source: String,
    /// Columns where the kink rule replaced the derivatives.
    pub kink_columns: Vec<usize>,
}

/// Scalar feedback law tabulated on a space-time grid.
#[derive(Clone, Debug)]
pub struct FeedbackLaw {
    grid: SpaceTimeGrid,
    table: Vec<f64>,
    control_set: ControlSet,
    interpolation: Interpolation,
    provenance: LawProvenance,
    allow_irregular: bool,
}

impl FeedbackLaw {
    /// Wrap a row-major table (`(nt+1) × (nx+1)`). Every entry must lie in `U`.
    pub fn from_table(
        grid: SpaceTimeGrid,
        control_set: ControlSet,
        table: Vec<f64>,
        provenance: LawProvenance,
    ) -> Result<Self> {
        if control_set.dim() != 1 {
            return Err(Error::Dimension(format!(
                "tabulated laws need a scalar control, got dimension {}",
                control_set.dim()
            )));
        }
        let expected = (grid.nt() + 1) * (grid.nx() + 1);
        if table.len() != expected {
            return Err(Error::Dimension(format!(
                "law table has {} entries, grid needs {expected}",
                table.len()
            )));
        }
        if let Some(&bad) = table.iter().find(|&&u| !control_set.contains(&[u])) {
            return Err(Error::ControlOutsideSet { value: vec![bad] });
        }
        Ok(Self {
            grid,
            table,
            control_set,
            interpolation: Interpolation::Nearest,
            provenance,
            allow_irregular: false,
        })
    }

    /// The law `(t, x) ↦ u` on the given grid.
    pub fn constant(grid: SpaceTimeGrid, control_set: ControlSet, u: f64) -> Result<Self> {
        let n = (grid.nt() + 1) * (grid.nx() + 1);
        Self::from_table(
            grid,
            control_set,
            vec![u; n],
            LawProvenance {
                source: "constant".into(),
                kink_columns: Vec::new(),
            },
        )
    }

    pub fn with_interpolation(mut self, interpolation: Interpolation) -> Self {
        self.interpolation = interpolation;
        self
    }

    /// Permit closed-loop evaluation even if [`check_law_regularity`] rejects
    /// the law.
    pub fn allow_irregular(mut self, allow: bool) -> Self {
        self.allow_irregular = allow;
        self
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn control_set(&self) -> &ControlSet {
        &self.control_set
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn provenance(&self) -> &LawProvenance {
        &self.provenance
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.table[i * (self.grid.nx() + 1) + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.grid.nx() + 1;
        &self.table[i * w..(i + 1) * w]
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        let g = &self.grid;
        let raw = match self.interpolation {
            Interpolation::Nearest => self.value(g.nearest_t(t), g.nearest_x(x)),
            Interpolation::Bilinear => {
                let (i, a) = cell(t, 0.0, g.dt(), g.nt());
                let (j, b) = cell(x, g.x_lo(), g.dx(), g.nx());
                let lo = (1.0 - b) * self.value(i, j) + b * self.value(i, j + 1);
                let hi = (1.0 - b) * self.value(i + 1, j) + b * self.value(i + 1, j + 1);
                (1.0 - a) * lo + a * hi
            }
        };
        let mut u = [raw];
        self.control_set.project(&mut u);
        u[0]
    }

    /// CSV table: metadata comment, header of state nodes, one row per time.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let g = &self.grid;
        let (lo, hi) = self.control_set.bounds()[0];
        writeln!(
            w,
            "# law source={} tie_break={TIE_BREAK} interpolation={} T={} nt={} x_lo={} x_hi={} nx={} u_lo={lo} u_hi={hi} u_points={} kink_columns={}",
            self.provenance.source.replace(' ', "_"),
            self.interpolation.as_str(),
            g.horizon(),
            g.nt(),
            g.x_lo(),
            g.x_hi(),
            g.nx(),
            self.control_set.grid_points()[0],
            self.provenance
                .kink_columns
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(","),
        )?;
        write!(w, "t")?;
        for j in 0..=g.nx() {
            write!(w, ",{}", g.x(j))?;
        }
        writeln!(w)?;
        for i in 0..=g.nt() {
            write!(w, "{}", g.t(i))?;
            for u in self.row(i) {
                write!(w, ",{u}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Inverse of [`FeedbackLaw::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let meta = lines.next().ok_or_else(|| Error::Parse("empty law file".into()))??;
        let meta = meta
            .strip_prefix("# law ")
            .ok_or_else(|| Error::Parse("missing '# law' metadata line".into()))?;
        let field = |key: &str| -> Result<&str> {
            meta.split_whitespace()
                .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
                .ok_or_else(|| Error::Parse(format!("law metadata lacks '{key}'")))
        };
        let num = |key: &str| -> Result<f64> {
            field(key)?
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("law metadata '{key}': {e}")))
        };
        let count = |key: &str| -> Result<usize> {
            field(key)?
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("law metadata '{key}': {e}")))
        };
        let tie = field("tie_break")?;
        if tie != TIE_BREAK {
            return Err(Error::Parse(format!("unknown tie-break rule '{tie}'")));
        }
        let interpolation = match field("interpolation")? {
            "nearest" => Interpolation::Nearest,
            "bilinear" => Interpolation::Bilinear,
            other => return Err(Error::Parse(format!("unknown interpolation '{other}'"))),
        };
        let grid = SpaceTimeGrid::new(num("T")?, count("nt")?, num("x_lo")?, num("x_hi")?, count("nx")?)?;
        let set = ControlSet::interval(num("u_lo")?, num("u_hi")?, count("u_points")?)?;
        let kinks = field("kink_columns")?;
        let kink_columns = kinks
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse(format!("law metadata 'kink_columns': {e}")))?;
        lines
            .next()
            .ok_or_else(|| Error::Parse("law file lacks a header row".into()))??;
        let mut table = Vec::with_capacity((grid.nt() + 1) * (grid.nx() + 1));
        for (row, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut cells = line.split(',');
            cells.next();
            for c in cells {
                table.push(
                    c.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("law row {row}: '{c}': {e}")))?,
                );
            }
        }
        let provenance = LawProvenance {
            source: field("source")?.to_string(),
            kink_columns,
        };
        Ok(Self::from_table(grid, set, table, provenance)?.with_interpolation(interpolation))
    }
}

fn cell(v: f64, lo: f64, h: f64, n: usize) -> (usize, f64) {
    let s = ((v - lo) / h).clamp(0.0, n as f64);
    let k = (s.floor() as usize).min(n - 1);
    (k, s - k as f64)
}

impl FeedbackPolicy for FeedbackLaw {
    fn control_dim(&self) -> usize {
        1
    }

    fn evaluate(&self, t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = self.eval(t, x[0]);
    }
}

/// `(W, p, P)` fed to the selector at node `(i, j)`, with the kink rule.
pub fn selector_inputs(surface: &ValueSurface, i: usize, j: usize) -> (f64, f64, f64) {
    let w = surface.value(i, j);
    if surface.is_kink_column(j) {
        let (l, r) = surface.one_sided_slopes(i, j);
        (w, 0.5 * (l + r), 0.0)
    } else {
        (w, surface.slope(i, j), surface.raw_curvature(i, j))
    }
}

/// Canonical argmin of the Hamiltonian at every surface node.
pub fn extract_feedback(surface: &ValueSurface, model: &ControlModel) -> Result<FeedbackLaw> {
    if !model.is_scalar() {
        return Err(Error::Dimension(
            "feedback extraction supports scalar models only".into(),
        ));
    }
    let g = *surface.grid();
    let width = g.nx() + 1;
    let set = model.control_set();
    let rows: Vec<Vec<f64>> = (0..=g.nt())
        .into_par_iter()
        .map(|i| {
            let t = g.t(i);
            (0..width)
                .map(|j| {
                    let (w, p, pp) = selector_inputs(surface, i, j);
                    let (value, k) = inf_hamiltonian1(model, t, g.x(j), w, p, pp);
                    if value.is_finite() {
                        Ok(set.point(k)[0])
                    } else {
                        Err(Error::NonFinite {
                            what: "Hamiltonian minimum".into(),
                            location: format!("t = {t}, x = {}", g.x(j)),
                        })
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let source = match surface.provenance() {
        crate::hjb::Provenance::Computed { model, scheme } => format!("{model}:{scheme}"),
        crate::hjb::Provenance::Candidate { name } => name.clone(),
    };
    FeedbackLaw::from_table(
        g,
        set.clone(),
        rows.concat(),
        LawProvenance {
            source,
            kink_columns: surface.kink_columns(),
        },
    )
}

/// Difference-quotient summary of a law table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LawRegularityReport {
    /// `max |u(t, x_{j+1}) − u(t, x_j)| / Δx` over the table.
    pub lipschitz: f64,
    /// Largest one-cell jump in `x` on each time row.
    pub worst_jump: Vec<f64>,
    /// Jumps above this count as discontinuities.
    pub jump_threshold: f64,
    /// `(time index, column)` of the largest jump.
    pub worst_location: (usize, usize),
    pub member: bool,
}

pub fn check_law_regularity(law: &FeedbackLaw) -> LawRegularityReport {
    let g = law.grid();
    let threshold = 0.5 * (law.control_set.upper()[0] - law.control_set.lower()[0]);
    let mut worst_location = (0, 0);
    let mut overall = 0.0f64;
    let worst_jump: Vec<f64> = (0..=g.nt())
        .map(|i| {
            let row = law.row(i);
            let mut worst = 0.0f64;
            for j in 0..g.nx() {
                let d = (row[j + 1] - row[j]).abs();
                if d > worst {
                    worst = d;
                }
                if d > overall {
                    overall = d;
                    worst_location = (i, j);
                }
            }
            worst
        })
        .collect();
    LawRegularityReport {
        lipschitz: overall / g.dx(),
        member: worst_jump.iter().all(|&d| d <= threshold),
        worst_jump,
        jump_threshold: threshold,
        worst_location,
    }
}

/// `J(t, x; 𝕦(·, X(·)))` by closed-loop simulation and the reflected scheme.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_feedback(
    model: &ControlModel,
    law: &FeedbackLaw,
    t: f64,
    x: f64,
    grid: &TimeGrid,
    paths: usize,
    seed: u64,
    config: &SolverConfig,
) -> Result<Estimate> {
    if !law.allow_irregular {
        let report = check_law_regularity(law);
        if !report.member {
            let (i, j) = report.worst_location;
            return Err(Error::InvalidInput(format!(
                "feedback law jumps by {} near (t, x) = ({}, {}); use allow_irregular to evaluate anyway",
                report.worst_jump[i],
                law.grid.t(i),
                law.grid.x(j)
            )));
        }
    }
    let ensemble = simulate_closed_loop(model, law, t, &[x], grid, paths, seed)?;
    estimate_reflected(model, &ensemble, config)
}
