//! Scenario files: TOML with a few fixed sections, parsed and validated
//! eagerly so that every expression error surfaces at load time.

use anyhow::{anyhow, bail, Context, Result};
use kpp_core::fields::{parse_expression, CellGeometry, CoefficientSet, Expression, PeriodicField, ScalarFn};
use kpp_core::operator::{Grid, DEFAULT_UNKNOWN_CAP};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Hard ceiling on `[grid] cap`.
pub const MAX_UNKNOWN_CAP: usize = 1 << 24;
/// Hard ceiling on `[grid] n_t`.
pub const MAX_TIME_STEPS: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    SpatialAverage,
    TemporalAverage,
    GrowthMonotone,
    Amplitude,
    Concavity,
    Derivative,
    DiffusionMonotone,
    Shear,
    PotentialDrift,
    Compjlambda,
    SimulateValidate,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Experiment::SpatialAverage,
        Experiment::TemporalAverage,
        Experiment::GrowthMonotone,
        Experiment::Amplitude,
        Experiment::Concavity,
        Experiment::Derivative,
        Experiment::DiffusionMonotone,
        Experiment::Shear,
        Experiment::PotentialDrift,
        Experiment::Compjlambda,
        Experiment::SimulateValidate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::SpatialAverage => "spatial-average",
            Experiment::TemporalAverage => "temporal-average",
            Experiment::GrowthMonotone => "growth-monotone",
            Experiment::Amplitude => "amplitude",
            Experiment::Concavity => "concavity",
            Experiment::Derivative => "derivative",
            Experiment::DiffusionMonotone => "diffusion-monotone",
            Experiment::Shear => "shear",
            Experiment::PotentialDrift => "potential-drift",
            Experiment::Compjlambda => "compjlambda",
            Experiment::SimulateValidate => "simulate-validate",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            let known: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
            anyhow!("unknown experiment `{s}`; expected one of {}", known.join(", "))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => bail!("unknown format `{s}`; expected csv or json"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteName {
    #[default]
    Auto,
    Steady,
    Floquet,
}

/// A string or a list of strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl OneOrMany {
    fn to_vec(&self) -> Vec<String> {
        match self {
            OneOrMany::One(s) => vec![s.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    #[serde(default = "one")]
    pub period: f64,
    #[serde(default = "unit_cell")]
    pub lengths: Vec<f64>,
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection {
            period: 1.0,
            lengths: vec![1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSection {
    /// `a` for `a·I`, or the upper triangle `[a11, a12, a22]` in 2D.
    #[serde(default = "one_string")]
    pub diffusion: OneOrMany,
    /// One formula per axis; a single string in 1D. Defaults to zero.
    #[serde(default)]
    pub drift: Option<OneOrMany>,
    #[serde(default = "one_string")]
    pub growth: OneOrMany,
}

impl Default for CoefficientSection {
    fn default() -> Self {
        CoefficientSection {
            diffusion: one_string(),
            drift: None,
            growth: one_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_n")]
    pub n: usize,
    /// Defaults to `n`.
    #[serde(default)]
    pub n_t: Option<usize>,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            n: default_n(),
            n_t: None,
            cap: default_cap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Required gap for strict inequalities, in the units of the compared values.
    #[serde(default = "d_strict")]
    pub strict_margin: f64,
    /// Allowed gap for equality cases.
    #[serde(default = "d_equality")]
    pub equality: f64,
    /// Slack for non-strict inequalities between eigenvalues.
    #[serde(default = "d_ordering")]
    pub ordering: f64,
    /// Exact identities evaluated on two discretizations.
    #[serde(default = "d_identity")]
    pub identity: f64,
    /// Relative tolerance of the finite-difference derivative check.
    #[serde(default = "d_relative")]
    pub derivative: f64,
    /// Relative tolerance of simulated front speeds.
    #[serde(default = "d_front")]
    pub front: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            strict_margin: d_strict(),
            equality: d_equality(),
            ordering: d_ordering(),
            identity: d_identity(),
            derivative: d_relative(),
            front: d_front(),
        }
    }
}

/// Per-experiment knobs. Everything is optional; each experiment fills in
/// its own defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub directions: Option<Vec<Vec<f64>>>,
    /// Added growth term: increment for `growth-monotone`, perturbation for
    /// `amplitude` and `derivative`.
    pub eta: Option<String>,
    #[serde(rename = "B")]
    pub b: Option<Vec<f64>>,
    pub kappa: Option<Vec<f64>>,
    /// Multiples `s` of each direction: `λ = s e`.
    pub lambda: Option<Vec<f64>>,
    /// Potential `Q` of a gradient drift.
    pub potential: Option<String>,
    /// Time-only difference `g(t)` for the concavity equality case.
    pub shift: Option<String>,
    pub h: Option<f64>,
    pub seed: Option<u64>,
    pub instances: Option<usize>,
    pub route: Option<RouteName>,
    /// Half-space search over ray directions (2D).
    pub refine: Option<bool>,
    /// Cauchy problem: cells of the extended line, final time, nodes per cell.
    pub cells: Option<usize>,
    pub left_cells: Option<usize>,
    pub t_end: Option<f64>,
    pub points_per_cell: Option<usize>,
    /// Fraction of the snapshots used for the front fit.
    pub fit_fraction: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<String>,
    #[serde(default)]
    pub format: Format,
    /// Dump `t,x_index,u` snapshots of Cauchy runs.
    #[serde(default)]
    pub snapshots: bool,
}

/// The file as written, echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub experiment: String,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub parameters: BTreeMap<String, f64>,
    #[serde(default)]
    pub coefficients: CoefficientSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub experiment: Experiment,
    pub geometry: CellGeometry,
    pub coeffs: CoefficientSet,
    pub grid: Grid,
    pub directions: Vec<Vec<f64>>,
    pub eta: Option<PeriodicField>,
    pub potential: Option<Expression>,
    pub shift: Option<PeriodicField>,
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_scenario(&text).with_context(|| format!("in {}", path.display()))
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = toml::from_str(text)?;
    Scenario::from_file(file)
}

impl Scenario {
    pub fn from_file(file: ScenarioFile) -> Result<Scenario> {
        let experiment: Experiment = file.experiment.parse()?;
        let g = &file.geometry;
        let geometry = CellGeometry::new(g.period, &g.lengths).context("[geometry]")?;
        let dim = geometry.dim();
        let params = &file.parameters;
        for name in params.keys() {
            if matches!(name.as_str(), "t" | "x" | "y" | "pi" | "e") {
                bail!("[parameters] `{name}` is reserved");
            }
        }

        let c = &file.coefficients;
        let diffusion_src = c.diffusion.to_vec();
        let diffusion = match (dim, diffusion_src.len()) {
            (_, 1) => PeriodicField::isotropic(&geometry, expr(&diffusion_src[0], params, "[coefficients] diffusion")?),
            (2, 3) => PeriodicField::matrix(
                &geometry,
                diffusion_src
                    .iter()
                    .map(|s| expr(s, params, "[coefficients] diffusion"))
                    .collect::<Result<_>>()?,
            ),
            (d, k) => bail!("[coefficients] diffusion: {k} entries do not fit a {d}D cell (use 1, or 3 in 2D)"),
        }
        .context("[coefficients] diffusion")?;
        let drift_src = match &c.drift {
            Some(d) => d.to_vec(),
            None => vec!["0".to_string(); dim],
        };
        if drift_src.len() != dim {
            bail!("[coefficients] drift: {} entries for a {dim}D cell", drift_src.len());
        }
        let drift = PeriodicField::vector(
            &geometry,
            drift_src.iter().map(|s| expr(s, params, "[coefficients] drift")).collect::<Result<_>>()?,
        )
        .context("[coefficients] drift")?;
        let growth_src = c.growth.to_vec();
        if growth_src.len() != 1 {
            bail!("[coefficients] growth must be a single formula");
        }
        let growth =
            PeriodicField::scalar(&geometry, expr(&growth_src[0], params, "[coefficients] growth")?).context("[coefficients] growth")?;
        let coeffs = CoefficientSet::new(diffusion, drift, growth).context("[coefficients]")?;

        let gs = &file.grid;
        if gs.cap > MAX_UNKNOWN_CAP {
            bail!("[grid] cap = {} exceeds the ceiling {MAX_UNKNOWN_CAP}", gs.cap);
        }
        let n_t = gs.n_t.unwrap_or(gs.n);
        if n_t > MAX_TIME_STEPS {
            bail!("[grid] n_t = {n_t} exceeds the ceiling {MAX_TIME_STEPS}");
        }
        let grid = Grid::with_cap(&geometry, &vec![gs.n; dim], n_t, gs.cap).context("[grid]")?;

        let s = &file.sweep;
        let directions = match &s.directions {
            Some(d) => d.clone(),
            None => {
                let mut e = vec![0.0; dim];
                e[0] = 1.0;
                vec![e]
            }
        };
        for e in &directions {
            let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
            if e.len() != dim || (norm - 1.0).abs() > 1e-9 {
                bail!("[sweep] directions: {e:?} is not a unit vector in {dim}D");
            }
        }
        let scalar = |src: &Option<String>, key: &str| -> Result<Option<PeriodicField>> {
            src.as_ref()
                .map(|s| {
                    let f = expr(s, params, &format!("[sweep] {key}"))?;
                    PeriodicField::scalar(&geometry, f).with_context(|| format!("[sweep] {key}"))
                })
                .transpose()
        };
        let eta = scalar(&s.eta, "eta")?;
        let shift = scalar(&s.shift, "shift")?;
        let potential = s
            .potential
            .as_ref()
            .map(|p| parse_expression(p, params).map_err(|e| anyhow!("[sweep] potential: {e}")))
            .transpose()?;
        for (key, v) in [("B", &s.b), ("kappa", &s.kappa), ("lambda", &s.lambda)] {
            if let Some(v) = v {
                if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                    bail!("[sweep] {key} must be a nonempty list of finite numbers");
                }
            }
        }
        if let Some(k) = &s.kappa {
            if k.iter().any(|&x| x <= 0.0) {
                bail!("[sweep] kappa values must be positive");
            }
        }
        if let Some(h) = s.h {
            if !(h > 0.0) {
                bail!("[sweep] h must be positive");
            }
        }
        Ok(Scenario {
            experiment,
            geometry,
            coeffs,
            grid,
            directions,
            eta,
            potential,
            shift,
            file,
        })
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.file.tolerances
    }

    pub fn sweep(&self) -> &SweepSection {
        &self.file.sweep
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.file.parameters
    }

    pub fn parse(&self, text: &str, location: &str) -> Result<ScalarFn> {
        expr(text, self.params(), location)
    }

    pub fn growth_source(&self) -> &str {
        match &self.file.coefficients.growth {
            OneOrMany::One(s) => s,
            OneOrMany::Many(v) => &v[0],
        }
    }
}

fn expr(text: &str, params: &BTreeMap<String, f64>, location: &str) -> Result<ScalarFn> {
    parse_expression(text, params)
        .map(ScalarFn::expr)
        .map_err(|e| anyhow!("{location} = \"{text}\": {e}"))
}

fn one() -> f64 {
    1.0
}
fn unit_cell() -> Vec<f64> {
    vec![1.0]
}
fn one_string() -> OneOrMany {
    OneOrMany::One("1".into())
}
fn default_n() -> usize {
    256
}
fn default_cap() -> usize {
    DEFAULT_UNKNOWN_CAP
}
fn d_strict() -> f64 {
    1e-4
}
fn d_equality() -> f64 {
    1e-5
}
fn d_ordering() -> f64 {
    1e-8
}
fn d_identity() -> f64 {
    1e-6
}
fn d_relative() -> f64 {
    1e-3
}
fn d_front() -> f64 {
    0.05
}
