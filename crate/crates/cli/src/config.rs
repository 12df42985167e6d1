//! Run configuration: a TOML document whose unknown keys are errors.
//!
//! ```toml
//! model = "example-classical"
//! surface = "computed"            # or a candidate surface name
//!
//! [example]                       # horizon, control_points
//! [grid]                          # nt, nx, x_lo, x_hi
//! [hjb]                           # scheme, boundary, obstacle, substeps, ...
//! [point]                         # t, x
//! [mc]                            # steps, paths, seed, budget, tol_z, ...
//! [mc.solver]                     # estimator, picard_iterations, bootstrap, ...
//! [mc.membership]                 # rho_max, radii, ratio, samples, seed, tol
//! [cost]                          # method, control, law, law_value, tree_depth, tree_scheme
//! [verify]                        # mode, law, law_value, control, triple, delta
//! [assumptions]                   # seed, box (optional probe box)
//! ```

use std::path::Path;

use rfbsde_core::hjb::CANDIDATE_NAMES;
use rfbsde_core::hjb::{HjbOptions, Substeps};
use rfbsde_core::model::{catalog, ExampleConfig, ProbeBox, CATALOG_NAMES};
use rfbsde_core::{ControlModel, McConfig, SpaceTimeGrid, TreeScheme};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: String,
    #[serde(default = "computed")]
    pub surface: String,
    #[serde(default)]
    pub example: ExampleConfig,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default = "cli_hjb")]
    pub hjb: HjbOptions,
    #[serde(default)]
    pub point: PointSection,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub cost: CostSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub assumptions: AssumptionsSection,
}

fn computed() -> String {
    "computed".into()
}

/// The command line defaults to automatic substeps so that the catalog
/// defaults run as configured; the library default refuses instead.
fn cli_hjb() -> HjbOptions {
    HjbOptions {
        substeps: Substeps::Auto,
        ..HjbOptions::default()
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: "example-classical".into(),
            surface: computed(),
            example: ExampleConfig::default(),
            grid: GridSection::default(),
            hjb: cli_hjb(),
            point: PointSection::default(),
            mc: McConfig::default(),
            cost: CostSection::default(),
            verify: VerifySection::default(),
            assumptions: AssumptionsSection::default(),
        }
    }
}

/// Space-time grid; unset entries take per-model defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nt: Option<usize>,
    pub nx: Option<usize>,
    pub x_lo: Option<f64>,
    pub x_hi: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointSection {
    pub t: f64,
    pub x: f64,
}

impl Default for PointSection {
    fn default() -> Self {
        Self { t: 0.0, x: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostMethod {
    /// Open-loop constant control through the regression scheme.
    Mc,
    /// Closed loop under a feedback law.
    Feedback,
    /// Binomial tree under a constant control.
    Tree,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawSource {
    /// Argmin law of the configured surface.
    Extracted,
    /// `law_value` everywhere.
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSection {
    pub method: CostMethod,
    pub control: f64,
    pub law: LawSource,
    pub law_value: f64,
    pub tree_depth: usize,
    pub tree_scheme: TreeScheme,
}

impl Default for CostSection {
    fn default() -> Self {
        Self {
            method: CostMethod::Mc,
            control: 0.0,
            law: LawSource::Extracted,
            law_value: 0.0,
            tree_depth: 16,
            tree_scheme: TreeScheme::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifyMode {
    Classical,
    Viscosity,
    Feedback,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub mode: VerifyMode,
    pub law: LawSource,
    pub law_value: f64,
    /// Constant open-loop control for the viscosity conditions.
    pub control: f64,
    /// Constant `(q, p, P)`; unset means finite differences of the surface.
    pub triple: Option<[f64; 3]>,
    /// Time margin for the regularity checks.
    pub delta: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            mode: VerifyMode::Classical,
            law: LawSource::Extracted,
            law_value: 0.0,
            control: 0.0,
            triple: None,
            delta: 0.1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssumptionsSection {
    pub seed: u64,
    /// Probe box; defaults to the grid box, the horizon and the control box.
    #[serde(rename = "box")]
    pub probe: Option<ProbeBox>,
}

/// Command-line tolerance overrides (`--tol.*`).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TolOverrides {
    pub budget: Option<f64>,
    pub z: Option<f64>,
    pub membership: Option<f64>,
    pub quota: Option<f64>,
    pub obstacle: Option<f64>,
    pub skorokhod: Option<f64>,
    pub picard: Option<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::config(describe_toml(&e)))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> CliResult<()> {
        if !CATALOG_NAMES.contains(&self.model.as_str()) {
            return Err(CliError::config(format!(
                "model: unknown catalog name '{}' (known: {})",
                self.model,
                CATALOG_NAMES.join(", ")
            )));
        }
        if self.surface != "computed" && !CANDIDATE_NAMES.contains(&self.surface.as_str()) {
            return Err(CliError::config(format!(
                "surface: unknown source '{}' (known: computed, {})",
                self.surface,
                CANDIDATE_NAMES.join(", ")
            )));
        }
        self.mc.validate().map_err(|e| CliError::config(format!("mc: {e}")))?;
        Ok(())
    }

    pub fn apply(&mut self, seed: Option<u64>, tol: &TolOverrides) -> CliResult<()> {
        if let Some(s) = seed {
            self.mc.seed = s;
            self.assumptions.seed = s;
        }
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut self.mc.budget, tol.budget);
        set(&mut self.mc.tol_z, tol.z);
        set(&mut self.mc.membership.tol, tol.membership);
        set(&mut self.mc.member_quota, tol.quota);
        set(&mut self.mc.solver.tol_obstacle, tol.obstacle);
        set(&mut self.mc.solver.tol_skorokhod, tol.skorokhod);
        set(&mut self.mc.solver.picard_tolerance, tol.picard);
        self.check()
    }

    pub fn model(&self) -> CliResult<ControlModel> {
        Ok(catalog(&self.model, &self.example)?)
    }

    /// Configured grid, completed with per-model defaults.
    pub fn grid(&self) -> CliResult<SpaceTimeGrid> {
        let (lo, hi) = match self.model.as_str() {
            "example-classical" => (0.1, 5.0),
            _ => (-5.0, 5.0),
        };
        let (nt, nx) = match self.model.as_str() {
            "example-classical" | "example-viscosity" => (4000, 200),
            _ => (1000, 100),
        };
        let g = &self.grid;
        SpaceTimeGrid::new(
            self.example.horizon,
            g.nt.unwrap_or(nt),
            g.x_lo.unwrap_or(lo),
            g.x_hi.unwrap_or(hi),
            g.nx.unwrap_or(nx),
        )
        .map_err(|e| CliError::config(format!("grid: {e}")))
    }
}

/// One line naming the offending key path.
fn describe_toml(e: &toml::de::Error) -> String {
    let msg = e.message().replace('\n', " ");
    match e.span() {
        Some(span) => format!("config at bytes {}..{}: {msg}", span.start, span.end),
        None => format!("config: {msg}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse("model = \"zero\"\nbogus = 1\n").unwrap_err();
        assert_eq!(err.code, "E-CONFIG");
        assert!(err.message.contains("bogus"), "{}", err.message);
        let err = RunConfig::parse("model = \"zero\"\n[mc]\npaht = 3\n").unwrap_err();
        assert!(err.message.contains("paht"));
    }

    #[test]
    fn unknown_model_is_rejected() {
        let err = RunConfig::parse("model = \"nope\"\n").unwrap_err();
        assert!(err.message.contains("example-classical"));
    }

    #[test]
    fn nested_sections_parse() {
        let cfg = RunConfig::parse(
            r#"
model = "example-viscosity"
surface = "candidate-viscosity"
[grid]
nt = 100
[hjb]
substeps = { fixed = 3 }
[mc]
paths = 500
[mc.solver]
estimator = { kind = "binning", bins = 8 }
[verify]
mode = "viscosity"
triple = [0.0, 1.0, 0.0]
"#,
        )
        .unwrap();
        assert_eq!(cfg.hjb.substeps, Substeps::Fixed(3));
        assert_eq!(cfg.mc.paths, 500);
        assert_eq!(cfg.verify.triple, Some([0.0, 1.0, 0.0]));
        let g = cfg.grid().unwrap();
        assert_eq!((g.nt(), g.nx(), g.x_lo()), (100, 200, -5.0));
    }

    #[test]
    fn overrides_apply() {
        let mut cfg = RunConfig::default();
        let tol = TolOverrides {
            budget: Some(0.2),
            z: Some(0.3),
            ..TolOverrides::default()
        };
        cfg.apply(Some(9), &tol).unwrap();
        assert_eq!((cfg.mc.seed, cfg.mc.budget, cfg.mc.tol_z), (9, 0.2, 0.3));
        let bad = TolOverrides {
            quota: Some(2.0),
            ..TolOverrides::default()
        };
        assert_eq!(cfg.apply(None, &bad).unwrap_err().code, "E-CONFIG");
    }
}
