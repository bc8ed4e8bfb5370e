//! Space-time periodic coefficient fields `A`, `q`, `μ` and their averages.

pub mod expr;

use std::collections::BTreeMap;
use std::sync::Arc;

pub use expr::{parse_expression, Expression, Var};

use crate::error::{Error, Result};

/// Flags declared by construction are re-verified by sampling to this level.
pub const FLAG_TOLERANCE: f64 = 1e-12;

/// Time period `T` and cell lengths `|L_1|..|L_N|`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGeometry {
    period: f64,
    lengths: Vec<f64>,
}

impl CellGeometry {
    pub fn new(period: f64, lengths: &[f64]) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::Geometry(format!("period must be positive, got {period}")));
        }
        if lengths.is_empty() || lengths.len() > 2 {
            return Err(Error::Geometry(format!(
                "dimension must be 1 or 2, got {}",
                lengths.len()
            )));
        }
        if let Some(l) = lengths.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Geometry(format!("cell lengths must be positive, got {l}")));
        }
        Ok(CellGeometry {
            period,
            lengths: lengths.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    /// `|C|`
    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    pub fn wrap_time(&self, t: f64) -> f64 {
        wrap(t, self.period)
    }

    pub fn wrap_point(&self, x: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (i, (&xi, &li)) in x.iter().zip(&self.lengths).enumerate() {
            out[i] = wrap(xi, li);
        }
        out
    }
}

fn wrap(v: f64, p: f64) -> f64 {
    let r = v.rem_euclid(p);
    if r >= p {
        0.0
    } else {
        r
    }
}

/// Values of a scalar function on a uniform periodic grid, `n_t` time levels
/// (1 for a time-independent table). Evaluation interpolates linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    period: f64,
    lengths: Vec<f64>,
    n_t: usize,
    n_space: Vec<usize>,
    values: Vec<f64>,
}

impl Table {
    pub fn new(geometry: &CellGeometry, n_space: &[usize], n_t: usize, values: Vec<f64>) -> Result<Self> {
        if n_space.len() != geometry.dim() {
            return Err(Error::Dimension(format!(
                "table has {} axes, geometry {}",
                n_space.len(),
                geometry.dim()
            )));
        }
        let per_level: usize = n_space.iter().product();
        if n_t == 0 || per_level == 0 || values.len() != per_level * n_t {
            return Err(Error::Dimension(format!(
                "table needs {} values, got {}",
                per_level * n_t,
                values.len()
            )));
        }
        Ok(Table {
            period: geometry.period(),
            lengths: geometry.lengths().to_vec(),
            n_t,
            n_space: n_space.to_vec(),
            values,
        })
    }

    fn level_value(&self, level: usize, x: &[f64]) -> f64 {
        let per_level: usize = self.n_space.iter().product();
        let base = &self.values[level * per_level..(level + 1) * per_level];
        match self.n_space.len() {
            1 => {
                let n = self.n_space[0];
                let s = x[0] / self.lengths[0] * n as f64;
                let i0 = s.floor();
                let w = s - i0;
                let i0 = (i0 as i64).rem_euclid(n as i64) as usize;
                let i1 = (i0 + 1) % n;
                if w == 0.0 {
                    base[i0]
                } else {
                    (1.0 - w) * base[i0] + w * base[i1]
                }
            }
            _ => {
                let (nx, ny) = (self.n_space[0], self.n_space[1]);
                let sx = x[0] / self.lengths[0] * nx as f64;
                let sy = x[1] / self.lengths[1] * ny as f64;
                let (fx, fy) = (sx.floor(), sy.floor());
                let (wx, wy) = (sx - fx, sy - fy);
                let i0 = (fx as i64).rem_euclid(nx as i64) as usize;
                let j0 = (fy as i64).rem_euclid(ny as i64) as usize;
                let (i1, j1) = ((i0 + 1) % nx, (j0 + 1) % ny);
                let at = |i: usize, j: usize| base[i + nx * j];
                (1.0 - wx) * (1.0 - wy) * at(i0, j0)
                    + wx * (1.0 - wy) * at(i1, j0)
                    + (1.0 - wx) * wy * at(i0, j1)
                    + wx * wy * at(i1, j1)
            }
        }
    }

    fn eval(&self, t: f64, x: &[f64]) -> f64 {
        if self.n_t == 1 {
            return self.level_value(0, x);
        }
        let s = t / self.period * self.n_t as f64;
        let k0 = s.floor();
        let w = s - k0;
        let k0 = (k0 as i64).rem_euclid(self.n_t as i64) as usize;
        let a = self.level_value(k0, x);
        if w == 0.0 {
            return a;
        }
        let b = self.level_value((k0 + 1) % self.n_t, x);
        (1.0 - w) * a + w * b
    }
}

#[derive(Debug, Clone)]
enum Source {
    Expr(Expression),
    Table(Table),
    Linear(Vec<(f64, ScalarFn)>),
    Product(ScalarFn, ScalarFn),
    SpatialMean {
        inner: ScalarFn,
        lengths: Vec<f64>,
        points: usize,
    },
    TemporalMean {
        inner: ScalarFn,
        period: f64,
        points: usize,
    },
}

/// One scalar component of a periodic field. Cheap to clone.
#[derive(Debug, Clone)]
pub struct ScalarFn {
    source: Arc<Source>,
    time_independent: bool,
    space_independent: bool,
}

impl ScalarFn {
    fn from_source(source: Source) -> Self {
        let (ti, si) = match &source {
            Source::Expr(e) => (
                !e.depends_on(Var::T),
                !e.depends_on(Var::X) && !e.depends_on(Var::Y),
            ),
            Source::Table(tb) => (tb.n_t == 1, false),
            Source::Linear(terms) => (
                terms.iter().all(|(_, f)| f.time_independent),
                terms.iter().all(|(_, f)| f.space_independent),
            ),
            Source::Product(a, b) => (
                a.time_independent && b.time_independent,
                a.space_independent && b.space_independent,
            ),
            Source::SpatialMean { inner, .. } => (inner.time_independent, true),
            Source::TemporalMean { inner, .. } => (true, inner.space_independent),
        };
        ScalarFn {
            source: Arc::new(source),
            time_independent: ti,
            space_independent: si,
        }
    }

    pub fn expr(e: Expression) -> Self {
        Self::from_source(Source::Expr(e))
    }

    pub fn table(t: Table) -> Self {
        Self::from_source(Source::Table(t))
    }

    pub fn constant(v: f64) -> Self {
        Self::expr(Expression::constant(v))
    }

    /// `Σ c_k f_k`; pure expressions are combined symbolically.
    pub fn linear(terms: Vec<(f64, ScalarFn)>) -> Self {
        if let Some(exprs) = terms
            .iter()
            .map(|(c, f)| f.as_expression().map(|e| e.scale(*c)))
            .collect::<Option<Vec<_>>>()
        {
            let sum = exprs
                .into_iter()
                .reduce(|a, b| a.add(&b))
                .unwrap_or_else(|| Expression::constant(0.0));
            return Self::expr(sum);
        }
        Self::from_source(Source::Linear(terms))
    }

    pub fn product(a: ScalarFn, b: ScalarFn) -> Self {
        if let (Some(x), Some(y)) = (a.as_expression(), b.as_expression()) {
            return Self::expr(x.mul(y));
        }
        Self::from_source(Source::Product(a, b))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::linear(vec![(c, self.clone())])
    }

    pub fn as_expression(&self) -> Option<&Expression> {
        match self.source.as_ref() {
            Source::Expr(e) => Some(e),
            _ => None,
        }
    }

    pub fn is_time_independent(&self) -> bool {
        self.time_independent
    }

    pub fn is_space_independent(&self) -> bool {
        self.space_independent
    }

    /// Evaluate at an already-wrapped point (`x` has one entry per axis).
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self.source.as_ref() {
            Source::Expr(e) => e.eval(t, x[0], x.get(1).copied().unwrap_or(0.0)),
            Source::Table(tb) => tb.eval(t, x),
            Source::Linear(terms) => terms.iter().map(|(c, f)| c * f.eval(t, x)).sum(),
            Source::Product(a, b) => a.eval(t, x) * b.eval(t, x),
            Source::SpatialMean { inner, lengths, points } => {
                let n = *points;
                let h: Vec<f64> = lengths.iter().map(|l| l / n as f64).collect();
                match lengths.len() {
                    1 => (0..n).map(|i| inner.eval(t, &[i as f64 * h[0]])).sum::<f64>() / n as f64,
                    _ => {
                        let mut s = 0.0;
                        for j in 0..n {
                            for i in 0..n {
                                s += inner.eval(t, &[i as f64 * h[0], j as f64 * h[1]]);
                            }
                        }
                        s / (n * n) as f64
                    }
                }
            }
            Source::TemporalMean { inner, period, points } => {
                let dt = period / *points as f64;
                (0..*points).map(|k| inner.eval(k as f64 * dt, x)).sum::<f64>() / *points as f64
            }
        }
    }

    /// Exact partial derivative along a space axis, when one can be formed.
    /// Tabulated sources return `None`; callers fall back to differences.
    pub fn partial(&self, axis: usize) -> Option<ScalarFn> {
        if self.space_independent {
            return Some(ScalarFn::constant(0.0));
        }
        match self.source.as_ref() {
            Source::Expr(e) => e.derivative(Var::space(axis)).ok().map(ScalarFn::expr),
            Source::Table(_) => None,
            Source::Linear(terms) => {
                let parts = terms
                    .iter()
                    .map(|(c, f)| f.partial(axis).map(|d| (*c, d)))
                    .collect::<Option<Vec<_>>>()?;
                Some(ScalarFn::linear(parts))
            }
            Source::Product(a, b) => {
                let (da, db) = (a.partial(axis)?, b.partial(axis)?);
                Some(ScalarFn::linear(vec![
                    (1.0, ScalarFn::product(da, b.clone())),
                    (1.0, ScalarFn::product(a.clone(), db)),
                ]))
            }
            Source::SpatialMean { .. } => Some(ScalarFn::constant(0.0)),
            Source::TemporalMean { inner, period, points } => {
                let d = inner.partial(axis)?;
                Some(ScalarFn::from_source(Source::TemporalMean {
                    inner: d,
                    period: *period,
                    points: *points,
                }))
            }
        }
    }

    /// `None` unless the function is a pure expression.
    pub fn substitute(&self, v: Var, with: &Expression) -> Option<ScalarFn> {
        self.as_expression().map(|e| ScalarFn::expr(e.substitute(v, with)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Scalar,
    Vector,
    /// Symmetric `N×N`; entries stored upper-triangular, row by row.
    Matrix,
}

/// A `(T, L)`-periodic scalar, vector or symmetric-matrix field.
#[derive(Debug, Clone)]
pub struct PeriodicField {
    kind: FieldKind,
    entries: Vec<ScalarFn>,
    geometry: CellGeometry,
}

impl PeriodicField {
    fn build(kind: FieldKind, entries: Vec<ScalarFn>, geometry: &CellGeometry) -> Result<Self> {
        let n = geometry.dim();
        let expected = match kind {
            FieldKind::Scalar => 1,
            FieldKind::Vector => n,
            FieldKind::Matrix => n * (n + 1) / 2,
        };
        if entries.len() != expected {
            return Err(Error::Dimension(format!(
                "{kind:?} field in dimension {n} needs {expected} entries, got {}",
                entries.len()
            )));
        }
        let field = PeriodicField {
            kind,
            entries,
            geometry: geometry.clone(),
        };
        field.check_variables()?;
        field.check_periodic()?;
        Ok(field)
    }

    pub fn scalar(geometry: &CellGeometry, f: ScalarFn) -> Result<Self> {
        Self::build(FieldKind::Scalar, vec![f], geometry)
    }

    pub fn vector(geometry: &CellGeometry, comps: Vec<ScalarFn>) -> Result<Self> {
        Self::build(FieldKind::Vector, comps, geometry)
    }

    /// Symmetric matrix from its upper triangle (`a11, a12, a22` in 2D).
    pub fn matrix(geometry: &CellGeometry, upper: Vec<ScalarFn>) -> Result<Self> {
        Self::build(FieldKind::Matrix, upper, geometry)
    }

    /// `a(t,x)·I_N`.
    pub fn isotropic(geometry: &CellGeometry, a: ScalarFn) -> Result<Self> {
        let upper = match geometry.dim() {
            1 => vec![a],
            _ => vec![a.clone(), ScalarFn::constant(0.0), a],
        };
        Self::matrix(geometry, upper)
    }

    pub fn zero_vector(geometry: &CellGeometry) -> Self {
        let comps = vec![ScalarFn::constant(0.0); geometry.dim()];
        Self::vector(geometry, comps).expect("zero field is valid")
    }

    pub fn constant_scalar(geometry: &CellGeometry, v: f64) -> Self {
        Self::scalar(geometry, ScalarFn::constant(v)).expect("constant field is valid")
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn geometry(&self) -> &CellGeometry {
        &self.geometry
    }

    pub fn entries(&self) -> &[ScalarFn] {
        &self.entries
    }

    /// Component `i` of a vector field, or the only entry of a scalar field.
    pub fn component(&self, i: usize) -> &ScalarFn {
        &self.entries[i]
    }

    /// Entry `(i, j)` of a matrix field.
    pub fn entry(&self, i: usize, j: usize) -> &ScalarFn {
        debug_assert_eq!(self.kind, FieldKind::Matrix);
        &self.entries[matrix_slot(i, j, self.geometry.dim())]
    }

    /// Scalar value with periodic argument reduction.
    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        let xw = self.geometry.wrap_point(x);
        self.entries[0].eval(self.geometry.wrap_time(t), &xw[..self.geometry.dim()])
    }

    /// All entries at one point, with periodic argument reduction.
    pub fn values(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let xw = self.geometry.wrap_point(x);
        let tw = self.geometry.wrap_time(t);
        let d = self.geometry.dim();
        self.entries.iter().map(|e| e.eval(tw, &xw[..d])).collect()
    }

    pub fn is_time_independent(&self) -> bool {
        self.entries.iter().all(|e| e.time_independent)
    }

    pub fn is_space_independent(&self) -> bool {
        self.entries.iter().all(|e| e.space_independent)
    }

    /// Verify by sampling that the field does not vary in time.
    pub fn verify_time_independent(&self) -> Result<()> {
        if self.sampled_variation(true) > FLAG_TOLERANCE {
            return Err(Error::TimeDependent(format!(
                "sampled variation {:e}",
                self.sampled_variation(true)
            )));
        }
        Ok(())
    }

    /// Verify by sampling that the field does not vary in space.
    pub fn verify_space_independent(&self) -> Result<()> {
        let v = self.sampled_variation(false);
        if v > FLAG_TOLERANCE {
            return Err(Error::SpaceDependent(format!("sampled variation {v:e}")));
        }
        Ok(())
    }

    /// Largest deviation across time (or space) over a fixed sample set.
    fn sampled_variation(&self, along_time: bool) -> f64 {
        let pts = self.sample_points(9);
        let times: Vec<f64> = (0..9).map(|k| k as f64 * self.geometry.period / 9.0).collect();
        let mut worst: f64 = 0.0;
        for e in &self.entries {
            if along_time {
                for x in &pts {
                    let base = e.eval(times[0], x);
                    for &t in &times[1..] {
                        worst = worst.max((e.eval(t, x) - base).abs());
                    }
                }
            } else {
                for &t in &times {
                    let base = e.eval(t, &pts[0]);
                    for x in &pts[1..] {
                        worst = worst.max((e.eval(t, x) - base).abs());
                    }
                }
            }
        }
        worst
    }

    fn sample_points(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let l = self.geometry.lengths();
        // irrational offsets keep samples off symmetry points
        let frac = |k: usize| ((k as f64 + std::f64::consts::FRAC_1_PI) / per_axis as f64).fract();
        match l.len() {
            1 => (0..per_axis).map(|i| vec![frac(i) * l[0]]).collect(),
            _ => (0..per_axis)
                .flat_map(|j| (0..per_axis).map(move |i| (i, j)))
                .map(|(i, j)| vec![frac(i) * l[0], ((j as f64 + 0.577_215_66) / per_axis as f64).fract() * l[1]])
                .collect(),
        }
    }

    fn check_variables(&self) -> Result<()> {
        if self.geometry.dim() == 1 {
            for e in &self.entries {
                if let Some(ex) = e.as_expression() {
                    if ex.depends_on(Var::Y) {
                        return Err(Error::Dimension(format!(
                            "`{ex}` uses y in a one-dimensional cell"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Expressions are defined on all of R^N; reject ones whose values do not
    /// match across the cell faces, which wrapping would turn into jumps.
    fn check_periodic(&self) -> Result<()> {
        let g = &self.geometry;
        let pts = self.sample_points(5);
        let times = [0.0, 0.37 * g.period];
        for e in &self.entries {
            let Some(ex) = e.as_expression() else { continue };
            let at = |t: f64, x: &[f64]| ex.eval(t, x[0], x.get(1).copied().unwrap_or(0.0));
            for x in &pts {
                for &t in &times {
                    let base = at(t, x);
                    let scale = 1.0 + base.abs();
                    for axis in 0..g.dim() {
                        let mut shifted = x.clone();
                        shifted[axis] += g.lengths[axis];
                        if (at(t, &shifted) - base).abs() > 1e-8 * scale {
                            return Err(Error::NotPeriodic(format!(
                                "`{ex}` is not {}-periodic in {}",
                                g.lengths[axis],
                                Var::space(axis).name()
                            )));
                        }
                    }
                    if (at(t + g.period, x) - base).abs() > 1e-8 * scale {
                        return Err(Error::NotPeriodic(format!(
                            "`{ex}` is not {}-periodic in t",
                            g.period
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn map_entries(&self, f: impl Fn(&ScalarFn) -> ScalarFn) -> Result<Self> {
        Self::build(self.kind, self.entries.iter().map(f).collect(), &self.geometry)
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map_entries(|e| e.scaled(c)).expect("scaling keeps validity")
    }

    /// `self + c·other` for fields of the same kind.
    pub fn plus_scaled(&self, c: f64, other: &PeriodicField) -> Result<Self> {
        if self.kind != other.kind || self.geometry != other.geometry {
            return Err(Error::Dimension("fields differ in kind or geometry".into()));
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| ScalarFn::linear(vec![(1.0, a.clone()), (c, b.clone())]))
            .collect();
        Self::build(self.kind, entries, &self.geometry)
    }

    pub fn plus_constant(&self, c: f64) -> Self {
        self.map_entries(|e| ScalarFn::linear(vec![(1.0, e.clone()), (c, ScalarFn::constant(1.0))]))
            .expect("shift keeps validity")
    }

    /// Multiply every entry by a scalar field.
    pub fn times_scalar(&self, s: &ScalarFn) -> Result<Self> {
        self.map_entries(|e| ScalarFn::product(s.clone(), e.clone()))
    }

    /// Substitute a variable in every (expression) entry, re-homing the
    /// result on `geometry`.
    pub fn substituted(&self, v: Var, with: &Expression, geometry: &CellGeometry) -> Result<Self> {
        let entries = self
            .entries
            .iter()
            .map(|e| {
                e.substitute(v, with)
                    .ok_or_else(|| Error::Invalid("substitution needs expression entries".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::build(self.kind, entries, geometry)
    }
}

fn matrix_slot(i: usize, j: usize, n: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * i.saturating_sub(1) / 2 + (j - i)
}

/// The three coefficient fields of the reaction-diffusion-advection problem.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub diffusion: PeriodicField,
    pub drift: PeriodicField,
    pub growth: PeriodicField,
}

impl CoefficientSet {
    pub fn new(diffusion: PeriodicField, drift: PeriodicField, growth: PeriodicField) -> Result<Self> {
        if diffusion.kind != FieldKind::Matrix || drift.kind != FieldKind::Vector || growth.kind != FieldKind::Scalar {
            return Err(Error::Dimension("expected (matrix, vector, scalar) fields".into()));
        }
        if diffusion.geometry != drift.geometry || diffusion.geometry != growth.geometry {
            return Err(Error::Geometry("coefficient fields must share one geometry".into()));
        }
        let set = CoefficientSet {
            diffusion,
            drift,
            growth,
        };
        ellipticity_bounds(&set.diffusion, 32)?;
        Ok(set)
    }

    /// Build from formula strings: `a` is the isotropic diffusion `a·I`,
    /// `q` one formula per axis.
    pub fn from_formulas(
        geometry: &CellGeometry,
        a: &str,
        q: &[&str],
        mu: &str,
        params: &BTreeMap<String, f64>,
    ) -> Result<Self> {
        let parse = |s: &str| parse_expression(s, params).map(ScalarFn::expr);
        let diffusion = PeriodicField::isotropic(geometry, parse(a)?)?;
        let drift = PeriodicField::vector(geometry, q.iter().map(|s| parse(s)).collect::<Result<_>>()?)?;
        let growth = PeriodicField::scalar(geometry, parse(mu)?)?;
        Self::new(diffusion, drift, growth)
    }

    pub fn geometry(&self) -> &CellGeometry {
        self.diffusion.geometry()
    }

    pub fn dim(&self) -> usize {
        self.geometry().dim()
    }

    pub fn is_time_independent(&self) -> bool {
        self.diffusion.is_time_independent() && self.drift.is_time_independent() && self.growth.is_time_independent()
    }

    pub fn is_space_independent(&self) -> bool {
        self.diffusion.is_space_independent() && self.drift.is_space_independent() && self.growth.is_space_independent()
    }

    pub fn with_growth(&self, growth: PeriodicField) -> Result<Self> {
        Self::new(self.diffusion.clone(), self.drift.clone(), growth)
    }

    pub fn with_drift(&self, drift: PeriodicField) -> Result<Self> {
        Self::new(self.diffusion.clone(), drift, self.growth.clone())
    }

    pub fn with_diffusion(&self, diffusion: PeriodicField) -> Result<Self> {
        Self::new(diffusion, self.drift.clone(), self.growth.clone())
    }

    /// `(κA, q, μ)`
    pub fn with_diffusion_scaled(&self, kappa: f64) -> Result<Self> {
        self.with_diffusion(self.diffusion.scaled(kappa))
    }
}

/// Default number of quadrature points per axis for averages.
pub const DEFAULT_QUADRATURE_POINTS: usize = 128;

/// `t ↦ (1/|C|)∫_C f(t,x) dx` by the composite trapezoid rule.
pub fn spatial_average(f: &PeriodicField, points: usize) -> Result<PeriodicField> {
    if f.kind != FieldKind::Scalar {
        return Err(Error::Dimension("spatial_average needs a scalar field".into()));
    }
    let g = f.geometry();
    let inner = f.entries[0].clone();
    let mean = if inner.space_independent {
        inner
    } else {
        ScalarFn::from_source(Source::SpatialMean {
            inner,
            lengths: g.lengths().to_vec(),
            points: points.max(2),
        })
    };
    PeriodicField::scalar(g, mean)
}

/// `x ↦ (1/T)∫_0^T f(t,x) dt` by the composite trapezoid rule.
pub fn temporal_average(f: &PeriodicField, points: usize) -> Result<PeriodicField> {
    if f.kind != FieldKind::Scalar {
        return Err(Error::Dimension("temporal_average needs a scalar field".into()));
    }
    let g = f.geometry();
    let inner = f.entries[0].clone();
    let mean = if inner.time_independent {
        inner
    } else {
        ScalarFn::from_source(Source::TemporalMean {
            inner,
            period: g.period(),
            points: points.max(2),
        })
    };
    PeriodicField::scalar(g, mean)
}

/// Space-time mean `(1/(T|C|))∫∫ f`.
pub fn space_time_mean(f: &PeriodicField, points: usize) -> Result<f64> {
    let s = spatial_average(f, points)?;
    let st = temporal_average(&s, points)?;
    Ok(st.value(0.0, &[0.0, 0.0]))
}

/// Drift `q = ∇Q` of a periodic potential together with the potential
/// `V_Q = ½ΔQ − ¼|∇Q|²` that the substitution `φ = ψ e^{Q/2}` produces.
#[derive(Debug, Clone)]
pub struct GradientDrift {
    pub drift: PeriodicField,
    pub potential: PeriodicField,
}

pub fn gradient_drift(potential: &PeriodicField) -> Result<GradientDrift> {
    if potential.kind != FieldKind::Scalar {
        return Err(Error::Dimension("the potential Q must be scalar".into()));
    }
    let g = potential.geometry();
    let q_expr = potential.entries[0]
        .as_expression()
        .ok_or_else(|| Error::NotDifferentiable("Q must be given by an expression".into()))?;
    if q_expr.depends_on(Var::T) {
        potential.verify_time_independent()?;
    }
    if q_expr.contains_abs() {
        return Err(Error::NotDifferentiable(format!("`{q_expr}` contains abs")));
    }
    let n = g.dim();
    let mut grad = Vec::with_capacity(n);
    let mut laplacian = Expression::constant(0.0);
    let mut grad_sq = Expression::constant(0.0);
    for axis in 0..n {
        let v = Var::space(axis);
        let d = q_expr.derivative(v)?;
        let dd = d.derivative(v)?;
        laplacian = laplacian.add(&dd);
        grad_sq = grad_sq.add(&d.mul(&d));
        grad.push(d);
    }
    let v_q = laplacian.scale(0.5).sub(&grad_sq.scale(0.25));
    let drift = PeriodicField::vector(g, grad.into_iter().map(ScalarFn::expr).collect())?;
    for axis in 0..n {
        let m = cell_mean(&drift.entries[axis], g, 256);
        if m.abs() > 1e-10 {
            return Err(Error::Invalid(format!(
                "∇Q has nonzero cell mean {m:e} along axis {axis}; Q is not periodic"
            )));
        }
    }
    Ok(GradientDrift {
        drift,
        potential: PeriodicField::scalar(g, ScalarFn::expr(v_q))?,
    })
}

fn cell_mean(f: &ScalarFn, g: &CellGeometry, points: usize) -> f64 {
    ScalarFn::from_source(Source::SpatialMean {
        inner: f.clone(),
        lengths: g.lengths().to_vec(),
        points,
    })
    .eval(0.0, &[0.0, 0.0][..g.dim()])
}

/// Sampled bounds `γ ≤ ξ·A ξ / |ξ|² ≤ Γ`.
pub fn ellipticity_bounds(a: &PeriodicField, samples: usize) -> Result<(f64, f64)> {
    if a.kind != FieldKind::Matrix {
        return Err(Error::Dimension("ellipticity_bounds needs a matrix field".into()));
    }
    if samples < 2 {
        return Err(Error::Invalid("need at least 2 samples per axis".into()));
    }
    let g = a.geometry();
    let n = g.dim();
    let n_time = if a.is_time_independent() { 1 } else { samples };
    let mut gamma = f64::INFINITY;
    let mut big_gamma = f64::NEG_INFINITY;
    let per_axis: Vec<f64> = g.lengths().iter().map(|l| l / samples as f64).collect();
    let total = samples.pow(n as u32);
    for k in 0..n_time {
        let t = k as f64 * g.period() / n_time as f64;
        for idx in 0..total {
            let x = [
                (idx % samples) as f64 * per_axis[0],
                if n > 1 { (idx / samples) as f64 * per_axis[1] } else { 0.0 },
            ];
            let vals: Vec<f64> = a.entries.iter().map(|e| e.eval(t, &x[..n])).collect();
            let (lo, hi) = if n == 1 {
                (vals[0], vals[0])
            } else {
                sym2_eigenvalues(vals[0], vals[1], vals[2])
            };
            gamma = gamma.min(lo);
            big_gamma = big_gamma.max(hi);
        }
    }
    if !(gamma > 0.0) {
        return Err(Error::NonElliptic { gamma });
    }
    Ok((gamma, big_gamma))
}

pub(crate) fn sym2_eigenvalues(a11: f64, a12: f64, a22: f64) -> (f64, f64) {
    let m = 0.5 * (a11 + a22);
    let d = (0.25 * (a11 - a22).powi(2) + a12 * a12).sqrt();
    (m - d, m + d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn geo1() -> CellGeometry {
        CellGeometry::new(1.0, &[1.0]).unwrap()
    }

    fn field(g: &CellGeometry, s: &str) -> PeriodicField {
        PeriodicField::scalar(g, ScalarFn::expr(parse_expression(s, &BTreeMap::new()).unwrap())).unwrap()
    }

    #[test]
    fn geometry_validation() {
        assert!(CellGeometry::new(0.0, &[1.0]).is_err());
        assert!(CellGeometry::new(1.0, &[]).is_err());
        assert!(CellGeometry::new(1.0, &[1.0, -2.0]).is_err());
        assert_eq!(CellGeometry::new(2.0, &[1.0, 3.0]).unwrap().volume(), 3.0);
    }

    #[test]
    fn matrix_slots() {
        assert_eq!(matrix_slot(0, 0, 1), 0);
        assert_eq!(matrix_slot(0, 0, 2), 0);
        assert_eq!(matrix_slot(0, 1, 2), 1);
        assert_eq!(matrix_slot(1, 0, 2), 1);
        assert_eq!(matrix_slot(1, 1, 2), 2);
    }

    #[test]
    fn rejects_non_periodic_and_misdimensioned_formulas() {
        let g = geo1();
        let x = ScalarFn::expr(parse_expression("x", &BTreeMap::new()).unwrap());
        assert!(matches!(PeriodicField::scalar(&g, x), Err(Error::NotPeriodic(_))));
        let y = ScalarFn::expr(parse_expression("cos(2*pi*y)", &BTreeMap::new()).unwrap());
        assert!(matches!(PeriodicField::scalar(&g, y), Err(Error::Dimension(_))));
    }

    #[test]
    fn spatial_averages() {
        let g = geo1();
        let m = spatial_average(&field(&g, "1 + 0.5*cos(2*pi*x)"), 64).unwrap();
        assert!(m.is_space_independent());
        assert!((m.value(0.3, &[0.7]) - 1.0).abs() < 1e-14);
        let m = spatial_average(&field(&g, "sin(2*pi*t)"), 64).unwrap();
        assert!((m.value(0.1, &[0.0]) - (0.2 * PI).sin()).abs() < 1e-15);
        let m = spatial_average(&field(&g, "cos(2*pi*t)*cos(2*pi*x)"), 64).unwrap();
        assert!(m.value(0.2, &[0.0]).abs() < 1e-14);
    }

    #[test]
    fn temporal_averages() {
        let g = geo1();
        let m = temporal_average(&field(&g, "1 + sin(2*pi*t)"), 64).unwrap();
        assert!(m.is_time_independent());
        assert!((m.value(0.0, &[0.3]) - 1.0).abs() < 1e-14);
        let m = temporal_average(&field(&g, "2 + cos(2*pi*x)"), 64).unwrap();
        assert_eq!(m.value(0.0, &[0.25]), 2.0 + (0.5 * PI).cos());
        let sep = field(&g, "1 + 0.5*cos(2*pi*x) + 0.3*sin(2*pi*t)");
        let m = temporal_average(&sep, 64).unwrap();
        for &x in &[0.0, 0.2, 0.9] {
            assert!((m.value(0.0, &[x]) - (1.0 + 0.5 * (2.0 * PI * x).cos())).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_drift_closed_forms() {
        let g = geo1();
        let gd = gradient_drift(&field(&g, "cos(2*pi*x)")).unwrap();
        for &x in &[0.0, 0.13, 0.5, 0.77] {
            let w = 2.0 * PI * x;
            let q = gd.drift.component(0).eval(0.0, &[x]);
            assert!((q + 2.0 * PI * w.sin()).abs() < 1e-12);
            let v = gd.potential.value(0.0, &[x]);
            let expect = -2.0 * PI * PI * w.cos() - PI * PI * w.sin().powi(2);
            assert!((v - expect).abs() < 1e-11, "{v} vs {expect}");
        }
        let zero = gradient_drift(&field(&g, "0")).unwrap();
        assert_eq!(zero.potential.value(0.1, &[0.4]), 0.0);
        assert!(matches!(
            gradient_drift(&field(&g, "abs(sin(pi*x))")),
            Err(Error::NotDifferentiable(_))
        ));
        assert!(matches!(
            gradient_drift(&field(&g, "cos(2*pi*x)*sin(2*pi*t)")),
            Err(Error::TimeDependent(_))
        ));
    }

    #[test]
    fn gradient_drift_in_two_dimensions_is_curl_free() {
        let g = CellGeometry::new(1.0, &[1.0, 1.0]).unwrap();
        let gd = gradient_drift(&field(&g, "cos(2*pi*x) + cos(2*pi*y) + 0.2*sin(2*pi*x)*cos(2*pi*y)")).unwrap();
        let qx = gd.drift.component(0).as_expression().unwrap();
        let qy = gd.drift.component(1).as_expression().unwrap();
        let cross_a = qx.derivative(Var::Y).unwrap();
        let cross_b = qy.derivative(Var::X).unwrap();
        for &(x, y) in &[(0.1, 0.2), (0.5, 0.9), (0.33, 0.71)] {
            assert!((cross_a.eval(0.0, x, y) - cross_b.eval(0.0, x, y)).abs() < 1e-12);
        }
        for axis in 0..2 {
            assert!(cell_mean(gd.drift.component(axis), &g, 64).abs() < 1e-10);
        }
    }

    #[test]
    fn ellipticity() {
        let g = geo1();
        let a = PeriodicField::isotropic(
            &g,
            ScalarFn::expr(parse_expression("2 + cos(2*pi*x)", &BTreeMap::new()).unwrap()),
        )
        .unwrap();
        let (lo, hi) = ellipticity_bounds(&a, 64).unwrap();
        assert!((lo - 1.0).abs() < 1e-6 && (hi - 3.0).abs() < 1e-6);
        let id = PeriodicField::isotropic(&g, ScalarFn::constant(1.0)).unwrap();
        assert_eq!(ellipticity_bounds(&id, 8).unwrap(), (1.0, 1.0));
        let bad = PeriodicField::isotropic(&g, ScalarFn::constant(-1.0)).unwrap();
        assert!(matches!(ellipticity_bounds(&bad, 8), Err(Error::NonElliptic { .. })));
        let g2 = CellGeometry::new(1.0, &[1.0, 1.0]).unwrap();
        let aniso = PeriodicField::matrix(
            &g2,
            vec![ScalarFn::constant(2.0), ScalarFn::constant(1.0), ScalarFn::constant(2.0)],
        )
        .unwrap();
        assert_eq!(ellipticity_bounds(&aniso, 4).unwrap(), (1.0, 3.0));
    }

    #[test]
    fn flags_are_verified_by_sampling() {
        let g = geo1();
        let f = field(&g, "1 + 0*t + cos(2*pi*x)");
        assert!(!f.is_time_independent());
        assert!(f.verify_time_independent().is_ok());
        assert!(f.verify_space_independent().is_err());
        assert!(field(&g, "sin(2*pi*t)").verify_time_independent().is_err());
    }

    #[test]
    fn tables_interpolate_between_nodes() {
        let g = geo1();
        let tb = Table::new(&g, &[4], 1, vec![0.0, 1.0, 2.0, 1.0]).unwrap();
        let f = PeriodicField::scalar(&g, ScalarFn::table(tb)).unwrap();
        assert_eq!(f.value(0.0, &[0.25]), 1.0);
        assert_eq!(f.value(0.0, &[0.125]), 0.5);
        assert_eq!(f.value(0.0, &[0.875]), 0.5);
        assert_eq!(f.value(3.0, &[-0.75]), 1.0);
        assert!(f.is_time_independent());
    }

    proptest! {
        #[test]
        fn evaluation_wraps_periods(t in -5.0f64..5.0, x in -5.0f64..5.0, y in -5.0f64..5.0,
                                    k in -4i32..4, m in -4i32..4, l in -4i32..4) {
            let g = CellGeometry::new(0.7, &[1.3, 0.6]).unwrap();
            let f = PeriodicField::scalar(&g, ScalarFn::expr(parse_expression(
                "1 + cos(2*pi*x/1.3)*sin(2*pi*y/0.6 + 1) + 0.5*sin(2*pi*t/0.7)", &BTreeMap::new()).unwrap())).unwrap();
            let a = f.value(t, &[x, y]);
            let b = f.value(t + k as f64 * 0.7, &[x + m as f64 * 1.3, y + l as f64 * 0.6]);
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn averages_commute(c1 in -1.0f64..1.0, c2 in -1.0f64..1.0, c3 in -1.0f64..1.0) {
            let g = geo1();
            let mut params = BTreeMap::new();
            params.insert("c1".to_string(), c1);
            params.insert("c2".to_string(), c2);
            params.insert("c3".to_string(), c3);
            let f = PeriodicField::scalar(&g, ScalarFn::expr(parse_expression(
                "1 + c1*cos(2*pi*x)*sin(2*pi*t) + c2*exp(sin(2*pi*x))*cos(2*pi*t) + c3*t*0 + sin(2*pi*(x+t))^2",
                &params).unwrap())).unwrap();
            let st = temporal_average(&spatial_average(&f, 32).unwrap(), 32).unwrap();
            let ts = spatial_average(&temporal_average(&f, 32).unwrap(), 32).unwrap();
            prop_assert!((st.value(0.0, &[0.0]) - ts.value(0.0, &[0.0])).abs() < 1e-10);
        }
    }
}
