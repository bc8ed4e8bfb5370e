//! One runner per dependence result. Each evaluates its sweep, then turns
//! the inequality of the result into assertions.

use crate::report::{Assertion, ExperimentReport, Relation, Row};
use crate::scenario::{Experiment, RouteName, Scenario};
use anyhow::{bail, Context, Result};
use kpp_core::eigen::{dk_dB_at_zero, principal_eigen_extrapolated, principal_k, RouteChoice};
use kpp_core::fields::{
    gradient_drift, space_time_mean, spatial_average, temporal_average, CellGeometry, CoefficientSet,
    PeriodicField, ScalarFn, DEFAULT_QUADRATURE_POINTS,
};
use kpp_core::operator::Grid;
use kpp_core::simulate::{front_speed, solve_cauchy, CauchyOptions, InitialData};
use kpp_core::speed::{shear_reduction, shear_speed, speed_x_independent, spreading_speed, SpeedOptions};
use kpp_core::variational::compjlambda_lower_bound;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::time::Instant;

pub const DEFAULT_SEED: u64 = 1;
const SAMPLES: usize = 9;
const ZERO: f64 = 1e-12;

/// Stored `(t, u)` levels of one Cauchy run.
pub type Snapshots = Vec<(f64, Vec<f64>)>;

/// Extra output of a run that does not belong in the report.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    /// `(label, snapshots)` of every Cauchy run.
    pub snapshots: Vec<(String, Snapshots)>,
}

pub fn run_experiment(s: &Scenario) -> Result<ExperimentReport> {
    run_with_artifacts(s).map(|(r, _)| r)
}

pub fn run_with_artifacts(s: &Scenario) -> Result<(ExperimentReport, Artifacts)> {
    let start = Instant::now();
    let mut out = Output::default();
    match s.experiment {
        Experiment::SpatialAverage => spatial(s, &mut out),
        Experiment::TemporalAverage => temporal(s, &mut out),
        Experiment::GrowthMonotone => growth_monotone(s, &mut out),
        Experiment::Amplitude => amplitude(s, &mut out),
        Experiment::Concavity => concavity(s, &mut out),
        Experiment::Derivative => derivative(s, &mut out),
        Experiment::DiffusionMonotone => diffusion_monotone(s, &mut out),
        Experiment::Shear => shear(s, &mut out),
        Experiment::PotentialDrift => potential_drift(s, &mut out),
        Experiment::Compjlambda => compjlambda(s, &mut out),
        Experiment::SimulateValidate => simulate_validate(s, &mut out),
    }
    .with_context(|| format!("experiment `{}`", s.experiment))?;
    let report = ExperimentReport {
        name: s.file.name.clone(),
        experiment: s.experiment.name().into(),
        inputs: s.file.clone(),
        seed: out.seed,
        columns: out.columns,
        rows: out.rows,
        assertions: out.assertions,
        notes: out.notes,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((report, out.artifacts))
}

#[derive(Default)]
struct Output {
    columns: Vec<String>,
    rows: Vec<Row>,
    assertions: Vec<Assertion>,
    notes: Vec<String>,
    seed: Option<u64>,
    artifacts: Artifacts,
}

impl Output {
    fn columns(&mut self, names: &[&str]) {
        self.columns = names.iter().map(|s| s.to_string()).collect();
    }

    fn col(&self, name: &str) -> usize {
        self.columns.iter().position(|c| c == name).expect("declared column")
    }

    /// Evaluate `jobs` concurrently and append one row per job, in order.
    fn sweep<'a, T, L, F>(&mut self, jobs: &[T], label: L, f: F) -> std::ops::Range<usize>
    where
        T: Sync,
        L: Fn(&T) -> String + Sync,
        F: Fn(&T) -> Result<Vec<(&'a str, f64)>> + Sync,
    {
        let width = self.columns.len();
        let columns = &self.columns;
        let rows: Vec<Row> = jobs
            .par_iter()
            .map(|job| {
                let t0 = Instant::now();
                let mut values = vec![None; width];
                let error = match f(job) {
                    Ok(pairs) => {
                        for (name, v) in pairs {
                            let c = columns.iter().position(|c| c == name).expect("declared column");
                            values[c] = Some(v);
                        }
                        None
                    }
                    Err(e) => Some(format!("{e:#}")),
                };
                Row {
                    label: label(job),
                    values,
                    error,
                    seconds: t0.elapsed().as_secs_f64(),
                }
            })
            .collect();
        let first = self.rows.len();
        self.rows.extend(rows);
        first..self.rows.len()
    }

    fn get(&self, row: usize, column: &str) -> Option<f64> {
        self.rows[row].values[self.col(column)]
    }

    fn check(&mut self, label: impl Into<String>, rel: Relation, left: Option<f64>, right: Option<f64>, tol: f64) {
        self.assertions.push(Assertion::new(label, rel, left, right, tol));
    }
}

fn route(s: &Scenario) -> RouteChoice {
    match s.sweep().route.unwrap_or_default() {
        RouteName::Auto => RouteChoice::Auto,
        RouteName::Steady => RouteChoice::Steady,
        RouteName::Floquet => RouteChoice::Floquet,
    }
}

fn speed_options(s: &Scenario) -> SpeedOptions {
    SpeedOptions {
        route: route(s),
        refine: s.sweep().refine.unwrap_or(s.geometry.dim() == 2),
        ..SpeedOptions::default()
    }
}

fn c_star(s: &Scenario, c: &CoefficientSet, e: &[f64]) -> Result<f64> {
    Ok(spreading_speed(c, e, &s.grid, &speed_options(s))?.c_star)
}

fn dir_label(e: &[f64]) -> String {
    let parts: Vec<String> = e.iter().map(|v| v.to_string()).collect();
    format!("e=({})", parts.join(","))
}

fn scaled(e: &[f64], s: f64) -> Vec<f64> {
    // adding 0.0 turns −0 into 0 in labels
    e.iter().map(|v| s * v + 0.0).collect()
}

/// Values of `f` on a fixed off-grid sample of the space-time cell.
fn samples(geometry: &CellGeometry, f: impl Fn(f64, &[f64]) -> f64) -> Vec<f64> {
    let dim = geometry.dim();
    let at = |i: usize, len: f64| (i as f64 + 0.3) / SAMPLES as f64 * len;
    let mut out = Vec::new();
    for it in 0..SAMPLES {
        let t = at(it, geometry.period());
        for ix in 0..SAMPLES {
            let x = at(ix, geometry.lengths()[0]);
            if dim == 1 {
                out.push(f(t, &[x]));
            } else {
                for iy in 0..SAMPLES {
                    out.push(f(t, &[x, at(iy, geometry.lengths()[1])]));
                }
            }
        }
    }
    out
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn is_identity(a: &PeriodicField) -> bool {
    let dim = a.geometry().dim();
    (0..dim).all(|i| {
        (0..dim).all(|j| {
            let target = if i == j { 1.0 } else { 0.0 };
            max_abs(&samples(a.geometry(), |t, x| a.entry(i, j).eval(t, x) - target)) <= ZERO
        })
    })
}

fn is_zero_vector(q: &PeriodicField) -> bool {
    (0..q.geometry().dim()).all(|i| max_abs(&samples(q.geometry(), |t, x| q.component(i).eval(t, x))) <= ZERO)
}

fn field_is_constant(f: &PeriodicField) -> bool {
    f.verify_space_independent().is_ok() && f.verify_time_independent().is_ok()
}

/// `μ(t,x) = μ_1(x) + μ_2(t)` on the sample set.
fn is_separable(f: &PeriodicField) -> bool {
    let g = f.geometry();
    let x0 = vec![0.0; g.dim()];
    let v = samples(g, |t, x| f.value(t, x) - f.value(t, &x0) - f.value(0.0, x) + f.value(0.0, &x0));
    max_abs(&v) <= ZERO * 10.0
}

fn spatial(s: &Scenario, out: &mut Output) -> Result<()> {
    let c = &s.coeffs;
    c.diffusion.verify_space_independent().context("A must not depend on x")?;
    c.drift.verify_space_independent().context("q must not depend on x")?;
    let mean = space_time_mean(&c.growth, DEFAULT_QUADRATURE_POINTS)?;
    if mean < 0.0 {
        bail!("the space-time mean of μ is {mean}, but it must be nonnegative");
    }
    let averaged = c.with_growth(spatial_average(&c.growth, DEFAULT_QUADRATURE_POINTS)?)?;
    let equality = c.growth.verify_space_independent().is_ok();
    out.columns(&["c_star", "c_star_averaged", "difference"]);
    let rows = out.sweep(&s.directions, |e| dir_label(e), |e| {
        let full = c_star(s, c, e)?;
        let avg = speed_x_independent(&averaged, e)?.c_star;
        Ok(vec![("c_star", full), ("c_star_averaged", avg), ("difference", full - avg)])
    });
    let tol = s.tolerances();
    for r in rows {
        let (l, rt) = (out.get(r, "c_star"), out.get(r, "c_star_averaged"));
        let label = format!("{}: c*(μ) vs c*(spatial mean of μ)", out.rows[r].label);
        if equality {
            out.check(label, Relation::Equal, l, rt, tol.equality);
        } else {
            out.check(label, Relation::StrictlyAbove, l, rt, tol.strict_margin);
        }
    }
    out.notes.push(format!("space-time mean of μ: {mean}"));
    Ok(())
}

fn temporal(s: &Scenario, out: &mut Output) -> Result<()> {
    let c = &s.coeffs;
    c.diffusion.verify_time_independent().context("A must not depend on t")?;
    c.drift.verify_time_independent().context("q must not depend on t")?;
    let averaged = c.with_growth(temporal_average(&c.growth, DEFAULT_QUADRATURE_POINTS)?)?;
    let k0 = principal_k(&averaged, &vec![0.0; s.geometry.dim()], &s.grid, RouteChoice::Steady)?;
    if k0 >= 0.0 {
        bail!("k_0 of the time-averaged problem is {k0}, but it must be negative");
    }
    let separable = is_separable(&c.growth);
    out.columns(&["c_star", "c_star_averaged", "difference"]);
    let rows = out.sweep(&s.directions, |e| dir_label(e), |e| {
        let full = c_star(s, c, e)?;
        let avg = c_star(s, &averaged, e)?;
        Ok(vec![("c_star", full), ("c_star_averaged", avg), ("difference", full - avg)])
    });
    let tol = s.tolerances();
    for r in rows {
        let (l, rt) = (out.get(r, "c_star"), out.get(r, "c_star_averaged"));
        let name = &out.rows[r].label.clone();
        out.check(format!("{name}: c*(μ) >= c*(time mean of μ)"), Relation::AtLeast, l, rt, tol.ordering);
        if separable {
            out.check(format!("{name}: equality for μ_1(x) + μ_2(t)"), Relation::Equal, l, rt, tol.equality);
        } else {
            out.check(format!("{name}: strict for non-separable μ"), Relation::StrictlyAbove, l, rt, tol.strict_margin);
        }
    }
    out.notes.push(format!("k_0 of the averaged problem: {k0}; separable: {separable}"));
    Ok(())
}

fn require_eta(s: &Scenario) -> Result<&PeriodicField> {
    s.eta.as_ref().context("[sweep] eta is required")
}

fn growth_monotone(s: &Scenario, out: &mut Output) -> Result<()> {
    let c = &s.coeffs;
    let eta = require_eta(s)?;
    let v = samples(&s.geometry, |t, x| eta.value(t, x));
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -ZERO {
        bail!("eta must be nonnegative (sampled minimum {min})");
    }
    let zero = max_abs(&v) <= ZERO;
    let raised = c.with_growth(c.growth.plus_scaled(1.0, eta)?)?;
    out.columns(&["c_star_raised", "c_star", "difference"]);
    let rows = out.sweep(&s.directions, |e| dir_label(e), |e| {
        let hi = c_star(s, &raised, e)?;
        let lo = c_star(s, c, e)?;
        Ok(vec![("c_star_raised", hi), ("c_star", lo), ("difference", hi - lo)])
    });
    let tol = s.tolerances();
    for r in rows {
        let (l, rt) = (out.get(r, "c_star_raised"), out.get(r, "c_star"));
        let name = out.rows[r].label.clone();
        if zero {
            out.check(format!("{name}: equal growth rates"), Relation::Equal, l, rt, tol.equality);
        } else {
            out.check(format!("{name}: c*(μ + η) > c*(μ)"), Relation::StrictlyAbove, l, rt, tol.strict_margin);
        }
    }
    Ok(())
}

fn amplitude(s: &Scenario, out: &mut Output) -> Result<()> {
    let c = &s.coeffs;
    let eta = require_eta(s)?;
    let mut bs = s.sweep().b.clone().unwrap_or_else(|| (-3..=6).map(|k| 2f64.powi(k)).collect());
    bs.sort_by(f64::total_cmp);
    let eta_mean = space_time_mean(eta, DEFAULT_QUADRATURE_POINTS)?;
    let classical = is_identity(&c.diffusion) && is_zero_vector(&c.drift) && field_is_constant(&c.growth);
    let eta_hat = temporal_average(eta, DEFAULT_QUADRATURE_POINTS)?;
    let max_hat = samples(&s.geometry, |_, x| eta_hat.value(0.0, x))
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let large_b = c.is_time_independent_verified() && max_hat > 0.0;
    let part1 = classical && eta_mean >= -ZERO;
    if !part1 && !large_b {
        bail!(
            "neither hypothesis holds: need (A = I, q = 0, constant μ, mean η >= 0) \
             or (time-independent A, q, μ and max over x of the time mean of η > 0)"
        );
    }
    let eta_varies = eta.verify_space_independent().is_err();
    let jobs: Vec<(Vec<f64>, f64)> = s
        .directions
        .iter()
        .flat_map(|e| bs.iter().map(move |&b| (e.clone(), b)))
        .collect();
    out.columns(&["B", "c_star"]);
    let rows = out.sweep(
        &jobs,
        |(e, b)| format!("{},B={b}", dir_label(e)),
        |(e, b)| {
            let cb = c.with_growth(c.growth.plus_scaled(*b, eta)?)?;
            Ok(vec![("B", *b), ("c_star", c_star(s, &cb, e)?)])
        },
    );
    let tol = s.tolerances();
    let m = bs.len();
    for (d, e) in s.directions.iter().enumerate() {
        let base = rows.start + d * m;
        for i in 0..m.saturating_sub(1) {
            let (lo, hi) = (out.get(base + i, "c_star"), out.get(base + i + 1, "c_star"));
            let span = format!("{}: B {} -> {}", dir_label(e), bs[i], bs[i + 1]);
            if part1 {
                if eta_varies || eta_mean > ZERO {
                    out.check(format!("{span}, increasing"), Relation::StrictlyAbove, hi, lo, tol.strict_margin);
                } else {
                    out.check(format!("{span}, constant"), Relation::Equal, hi, lo, tol.equality);
                }
            }
            if large_b && i >= m / 2 {
                out.check(format!("{span}, increasing for large B"), Relation::StrictlyAbove, hi, lo, tol.strict_margin);
            }
        }
    }
    out.notes.push(format!(
        "mean of η: {eta_mean}; classical hypotheses: {part1}; large-B hypotheses: {large_b}"
    ));
    Ok(())
}

/// Random zero-mean trigonometric perturbation in the variables of `g`.
fn random_wave(rng: &mut ChaCha8Rng, g: &CellGeometry, with_time: bool) -> String {
    let l = g.lengths();
    let (a, b) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
    let mut f = format!("{a}*cos(2*pi*x/{}) + {b}*sin(4*pi*x/{} + 1)", l[0], l[0]);
    if g.dim() == 2 {
        let c = rng.gen_range(-0.5..0.5);
        f.push_str(&format!(" + {c}*cos(2*pi*(x/{} + y/{}))", l[0], l[1]));
    }
    if with_time {
        let c = rng.gen_range(-0.5..0.5);
        f.push_str(&format!(" + {c}*cos(2*pi*t/{} + x/{})", g.period(), l[0]));
    }
    f
}

fn seed(s: &Scenario) -> u64 {
    s.sweep().seed.unwrap_or(DEFAULT_SEED)
}

fn lambdas(s: &Scenario, default: &[f64]) -> Vec<f64> {
    s.sweep().lambda.clone().unwrap_or_else(|| default.to_vec())
}

fn concavity(s: &Scenario, out: &mut Output) -> Result<()> {
    let c = &s.coeffs;
    let seed = seed(s);
    out.seed = Some(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = s.sweep().instances.unwrap_or(10);
    let route = route(s);
    let time_dependent = !c.is_time_independent_verified();
    let mut pairs = Vec::new();
    for i in 0..instances {
        let make = |rng: &mut ChaCha8Rng| -> Result<PeriodicField> {
            let w = s.parse(&random_wave(rng, &s.geometry, time_dependent), "random growth")?;
            c.growth.plus_scaled(1.0, &PeriodicField::scalar(&s.geometry, w)?).map_err(Into::into)
        };
        let m1 = make(&mut rng)?;
        let m2 = make(&mut rng)?;
        pairs.push((format!("random {i}"), m1, m2, false));
    }
    let time_only = c.diffusion.is_time_independent() && c.drift.is_time_independent();
    if time_only {
        let shift = match &s.shift {
            Some(f) => f.clone(),
            None => PeriodicField::scalar(
                &s.geometry,
                s.parse(&format!("0.4*sin(2*pi*t/{})", s.geometry.period()), "shift")?,
            )?,
        };
        let v = samples(&s.geometry, |t, x| shift.value(t, x) - shift.value(t, &vec![0.0; x.len()]));
        if max_abs(&v) > ZERO {
            bail!("[sweep] shift must depend on t only");
        }
        pairs.push(("time shift".into(), c.growth.clone(), c.growth.plus_scaled(1.0, &shift)?, true));
    }
    let lams = lambdas(s, &[0.0, 0.5]);
    let mut jobs = Vec::new();
    for (p, pair) in pairs.iter().enumerate() {
        for e in &s.directions {
            for &l in &lams {
                jobs.push((p, scaled(e, l), pair.3, format!("{},{},lambda={l}", pair.0, dir_label(e))));
            }
        }
    }
    out.columns(&["k_1", "k_2", "k_mid", "gap"]);
    let rows = out.sweep(&jobs, |j| j.3.clone(), |(p, lam, _, _)| {
        let (_, m1, m2, _) = &pairs[*p];
        let mid = m1.scaled(0.5).plus_scaled(0.5, m2)?;
        let k = |mu: &PeriodicField| -> Result<f64> { Ok(principal_k(&c.with_growth(mu.clone())?, lam, &s.grid, route)?) };
        let (k1, k2, km) = (k(m1)?, k(m2)?, k(&mid)?);
        Ok(vec![("k_1", k1), ("k_2", k2), ("k_mid", km), ("gap", km - 0.5 * (k1 + k2))])
    });
    let tol = s.tolerances().ordering;
    for (r, job) in rows.zip(&jobs) {
        let avg = match (out.get(r, "k_1"), out.get(r, "k_2")) {
            (Some(a), Some(b)) => Some(0.5 * (a + b)),
            _ => None,
        };
        let km = out.get(r, "k_mid");
        if job.2 {
            out.check(format!("{}: equality for a time-only difference", job.3), Relation::Equal, km, avg, tol);
        } else {
            out.check(format!("{}: k(mid) >= mean of k", job.3), Relation::AtLeast, km, avg, tol);
        }
    }
    Ok(())
}

fn derivative(s: &Scenario, out: &mut Output) -> Result<()> {
    let c = &s.coeffs;
    let eta = require_eta(s)?;
    let h = s.sweep().h.unwrap_or(1e-4);
    let route = route(s);
    let bumped = c.with_growth(c.growth.plus_scaled(h, eta)?)?;
    let jobs: Vec<(Vec<f64>, String)> = s
        .directions
        .iter()
        .flat_map(|e| lambdas(s, &[0.0, 1.0]).into_iter().map(move |l| (scaled(e, l), format!("{},lambda={l}", dir_label(e)))))
        .collect();
    out.columns(&["k_0", "k_h", "finite_difference", "dk_dB", "weighted_integral"]);
    let rows = out.sweep(&jobs, |j| j.1.clone(), |(lam, _)| {
        let k0 = principal_k(c, lam, &s.grid, route)?;
        let kh = principal_k(&bumped, lam, &s.grid, route)?;
        let d = dk_dB_at_zero(c, lam, eta, &s.grid, route)?;
        Ok(vec![
            ("k_0", k0),
            ("k_h", kh),
            ("finite_difference", (kh - k0) / h),
            ("dk_dB", d),
            ("weighted_integral", -d),
        ])
    });
    let tol = s.tolerances();
    for (r, job) in rows.zip(&jobs) {
        let k0 = out.get(r, "k_0");
        let rel = tol.derivative * k0.map_or(0.0, f64::abs);
        out.check(
            format!("{}: dk/dB at 0 matches the difference quotient", job.1),
            Relation::Equal,
            out.get(r, "dk_dB"),
            out.get(r, "finite_difference"),
            rel,
        );
        if out.get(r, "weighted_integral").is_some_and(|w| w >= 0.0) {
            out.check(format!("{}: nonincreasing in B", job.1), Relation::AtMost, out.get(r, "k_h"), k0, tol.ordering);
        }
    }
    out.notes.push(format!("step h = {h}"));
    Ok(())
}

fn diffusion_monotone(s: &Scenario, out: &mut Output) -> Result<()> {
    let c = &s.coeffs;
    if !is_zero_vector(&c.drift) {
        bail!("q must vanish");
    }
    c.diffusion.verify_time_independent().context("A must not depend on t")?;
    c.growth.verify_time_independent().context("μ must not depend on t")?;
    let mut kappas = s.sweep().kappa.clone().unwrap_or_else(|| vec![0.25, 0.5, 1.0, 2.0, 4.0]);
    kappas.sort_by(f64::total_cmp);
    let lams = lambdas(s, &[0.5, 1.0, 2.0]);
    let lam_cols: Vec<String> = lams.iter().map(|l| format!("k_lambda={l}")).collect();
    let mut cols = vec!["kappa", "c_star", "k_0"];
    cols.extend(lam_cols.iter().map(String::as_str));
    out.columns(&cols);
    let jobs: Vec<(Vec<f64>, f64)> = s
        .directions
        .iter()
        .flat_map(|e| kappas.iter().map(move |&k| (e.clone(), k)))
        .collect();
    let dim = s.geometry.dim();
    let rows = out.sweep(
        &jobs,
        |(e, k)| format!("{},kappa={k}", dir_label(e)),
        |(e, k)| {
            let ck = c.with_diffusion_scaled(*k)?;
            let mut v = vec![("kappa", *k), ("c_star", c_star(s, &ck, e)?)];
            v.push(("k_0", principal_k(&ck, &vec![0.0; dim], &s.grid, RouteChoice::Steady)?));
            for (name, &l) in lam_cols.iter().zip(&lams) {
                v.push((name.as_str(), principal_k(&ck, &scaled(e, l), &s.grid, RouteChoice::Steady)?));
            }
            Ok(v)
        },
    );
    let tol = s.tolerances();
    let m = kappas.len();
    for (d, e) in s.directions.iter().enumerate() {
        let base = rows.start + d * m;
        for i in 0..m {
            if i + 1 < m {
                out.check(
                    format!("{}: c* increases from kappa {} to {}", dir_label(e), kappas[i], kappas[i + 1]),
                    Relation::StrictlyAbove,
                    out.get(base + i + 1, "c_star"),
                    out.get(base + i, "c_star"),
                    tol.strict_margin,
                );
            }
            for (name, l) in lam_cols.iter().zip(&lams) {
                out.check(
                    format!("{},kappa={}: k_(lambda e) <= k_0 at lambda={l}", dir_label(e), kappas[i]),
                    Relation::AtMost,
                    out.get(base + i, name),
                    out.get(base + i, "k_0"),
                    tol.ordering,
                );
            }
        }
    }
    Ok(())
}

fn shear(s: &Scenario, out: &mut Output) -> Result<()> {
    let c = &s.coeffs;
    let g = &s.geometry;
    if g.dim() != 2 {
        bail!("the shear experiment needs a 2D cell");
    }
    if !is_identity(&c.diffusion) || !field_is_constant(&c.growth) {
        bail!("needs A = I and a constant growth rate");
    }
    let q1 = PeriodicField::scalar(g, c.drift.component(0).clone())?;
    let mean = space_time_mean(&q1, DEFAULT_QUADRATURE_POINTS)?;
    let spatial_means = samples(g, |t, _| spatial_average(&q1, DEFAULT_QUADRATURE_POINTS).map_or(f64::NAN, |m| m.value(t, &[0.0, 0.0])));
    if max_abs(&spatial_means) > 1e-10 || !(mean.abs() <= 1e-10) {
        bail!("q_1 must have zero mean over the cell");
    }
    if max_abs(&samples(g, |t, x| q1.value(t, x))) <= ZERO {
        bail!("q_1 vanishes identically");
    }
    let reduced = CellGeometry::new(g.period(), &g.lengths()[1..])?;
    let n = s.file.grid.n;
    let n_t = s.grid.n_t();
    let grid1 = Grid::with_cap(&reduced, &[n], n_t, s.file.grid.cap)?;
    let mut bs = s.sweep().b.clone().unwrap_or_else(|| vec![0.0, 1.0, 2.0, 4.0]);
    bs.sort_by(f64::total_cmp);
    let opts = SpeedOptions {
        refine: false,
        ..speed_options(s)
    };
    let jobs: Vec<(Vec<f64>, f64)> = s
        .directions
        .iter()
        .flat_map(|e| bs.iter().map(move |&b| (e.clone(), b)))
        .collect();
    out.columns(&["B", "c_star"]);
    let rows = out.sweep(
        &jobs,
        |(e, b)| format!("{},B={b}", dir_label(e)),
        |(e, b)| {
            let cb = shear_drift(c, g, *b)?;
            Ok(vec![("B", *b), ("c_star", shear_speed(&cb, e, &grid1, &opts)?.c_star)])
        },
    );
    let tol = s.tolerances();
    let m = bs.len();
    for (d, e) in s.directions.iter().enumerate() {
        let base = rows.start + d * m;
        for i in 0..m.saturating_sub(1) {
            out.check(
                format!("{}: c* increases from B {} to {}", dir_label(e), bs[i], bs[i + 1]),
                Relation::StrictlyAbove,
                out.get(base + i + 1, "c_star"),
                out.get(base + i, "c_star"),
                tol.strict_margin,
            );
        }
    }

    // one probe of the reduction against the full 2D eigenproblem
    let probe_n = n.min(64);
    let b = *bs.last().expect("nonempty B grid");
    let lam = scaled(&s.directions[0], -lams_first(s));
    let cb = shear_drift(c, g, b)?;
    let t0 = Instant::now();
    let full_grid = Grid::with_cap(g, &[probe_n, probe_n], n_t.min(probe_n.max(64)), s.file.grid.cap)?;
    let probe_1d = Grid::with_cap(&reduced, &[probe_n], full_grid.n_t(), s.file.grid.cap)?;
    let probe = (|| -> Result<(f64, f64)> {
        let full = principal_k(&cb, &lam, &full_grid, route(s))?;
        let (set, lam1) = shear_reduction(&cb, &lam, &reduced)?;
        let red = principal_k(&set, &lam1, &probe_1d, route(s))?;
        Ok((full, red))
    })();
    out.columns.extend(["k_full".to_string(), "k_reduced".to_string()]);
    for r in &mut out.rows {
        r.values.extend([None, None]);
    }
    let label = format!("probe,B={b},lambda=({},{})", lam[0], lam[1]);
    let (values, error) = match &probe {
        Ok((f, r)) => (vec![Some(b), None, Some(*f), Some(*r)], None),
        Err(e) => (vec![Some(b), None, None, None], Some(format!("{e:#}"))),
    };
    out.rows.push(Row {
        label: label.clone(),
        values,
        error,
        seconds: t0.elapsed().as_secs_f64(),
    });
    let (f, r) = match probe {
        Ok((f, r)) => (Some(f), Some(r)),
        Err(_) => (None, None),
    };
    out.check(format!("{label}: reduced k equals full k"), Relation::Equal, r, f, tol.equality);
    out.notes.push(format!("probe grid {probe_n}x{probe_n}, n_t = {}", full_grid.n_t()));
    Ok(())
}

fn lams_first(s: &Scenario) -> f64 {
    lambdas(s, &[0.5])[0]
}

/// `(A, (B q_1, 0), μ)`.
fn shear_drift(c: &CoefficientSet, g: &CellGeometry, b: f64) -> Result<CoefficientSet> {
    let q1 = c.drift.component(0);
    let expr = q1.as_expression().context("q_1 must be an expression")?;
    let drift = PeriodicField::vector(g, vec![ScalarFn::expr(expr.scale(b)), ScalarFn::constant(0.0)])?;
    Ok(c.with_drift(drift)?)
}

fn potential_drift(s: &Scenario, out: &mut Output) -> Result<()> {
    let c = &s.coeffs;
    let g = &s.geometry;
    let q = s.potential.as_ref().context("[sweep] potential is required")?;
    if !is_identity(&c.diffusion) || !is_zero_vector(&c.drift) || !field_is_constant(&c.growth) {
        bail!("needs A = I, no drift in [coefficients] and a constant growth rate");
    }
    let mu0 = c.growth.value(0.0, &vec![0.0; g.dim()]);
    if !(mu0 > 0.0) {
        bail!("the growth rate must be a positive constant, got {mu0}");
    }
    let bound = 2.0 * mu0.sqrt();
    let mut bs = s.sweep().b.clone().unwrap_or_else(|| vec![0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0]);
    bs.sort_by(f64::total_cmp);
    let lams = lambdas(s, &[0.0, 0.5]);
    let names: Vec<(String, String)> = lams
        .iter()
        .map(|l| (format!("k_drift_lambda={l}"), format!("k_potential_lambda={l}")))
        .collect();
    let mut cols = vec!["B", "c_star", "c_star_over_B"];
    for (a, b) in &names {
        cols.extend([a.as_str(), b.as_str()]);
    }
    out.columns(&cols);
    let jobs: Vec<(Vec<f64>, f64)> = s
        .directions
        .iter()
        .flat_map(|e| bs.iter().map(move |&b| (e.clone(), b)))
        .collect();
    let rows = out.sweep(
        &jobs,
        |(e, b)| format!("{},B={b}", dir_label(e)),
        |(e, b)| {
            let gd = gradient_drift(&PeriodicField::scalar(g, ScalarFn::expr(q.scale(*b)))?)?;
            let with_drift = c.with_drift(gd.drift.clone())?;
            let transformed = c.with_growth(c.growth.plus_scaled(1.0, &gd.potential)?)?;
            let cs = c_star(s, &with_drift, e)?;
            let mut v = vec![("B", *b), ("c_star", cs)];
            if *b > 0.0 {
                v.push(("c_star_over_B", cs / b));
            }
            for ((kd, kp), &l) in names.iter().zip(&lams) {
                let lam = scaled(e, l);
                v.push((kd.as_str(), principal_eigen_extrapolated(&with_drift, &lam, &s.grid)?));
                v.push((kp.as_str(), principal_eigen_extrapolated(&transformed, &lam, &s.grid)?));
            }
            Ok(v)
        },
    );
    let tol = s.tolerances();
    let m = bs.len();
    for (d, e) in s.directions.iter().enumerate() {
        let base = rows.start + d * m;
        let el = dir_label(e);
        for i in 0..m {
            let r = base + i;
            out.check(
                format!("{el},B={}: c* <= 2 sqrt(mu0)", bs[i]),
                Relation::AtMost,
                out.get(r, "c_star"),
                Some(bound),
                tol.identity,
            );
            for ((kd, kp), l) in names.iter().zip(&lams) {
                out.check(
                    format!("{el},B={},lambda={l}: drift and potential forms agree", bs[i]),
                    Relation::Equal,
                    out.get(r, kd),
                    out.get(r, kp),
                    tol.identity,
                );
            }
            if i + 1 < m && bs[i] > 0.0 {
                out.check(
                    format!("{el}: c*/B decreases from B {} to {}", bs[i], bs[i + 1]),
                    Relation::StrictlyBelow,
                    out.get(r + 1, "c_star_over_B"),
                    out.get(r, "c_star_over_B"),
                    tol.strict_margin,
                );
            }
        }
    }
    out.notes.push("k columns are Richardson-extrapolated steady eigenvalues".into());
    Ok(())
}

fn compjlambda(s: &Scenario, out: &mut Output) -> Result<()> {
    let g = &s.geometry;
    let seed = seed(s);
    out.seed = Some(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let instances = s.sweep().instances.unwrap_or(20);
    let mut cases: Vec<(String, CoefficientSet, Vec<f64>)> = Vec::new();
    if s.coeffs.is_time_independent_verified() {
        for e in &s.directions {
            for l in lambdas(s, &[0.0, 0.5]) {
                cases.push((format!("scenario,{},lambda={l}", dir_label(e)), s.coeffs.clone(), scaled(e, l)));
            }
        }
    } else {
        out.notes.push("scenario coefficients depend on t; only random instances are checked".into());
    }
    let l0 = g.lengths()[0];
    for i in 0..instances {
        let (a1, p1) = (rng.gen_range(0.0..0.6), rng.gen_range(0.0..2.0 * PI));
        let (q1, q2) = (rng.gen_range(-0.4..0.4), rng.gen_range(-0.2..0.2));
        let (m0, m1) = (rng.gen_range(0.0..2.0), rng.gen_range(-0.8..0.8));
        let mut a = format!("1 + {a1}*cos(2*pi*x/{l0} + {p1})");
        let mut pot = format!("{q1}*cos(2*pi*x/{l0}) + {q2}*sin(4*pi*x/{l0})");
        let mu = format!("{m0} + {m1}*sin(2*pi*x/{l0})");
        let lam = if g.dim() == 2 {
            let l1 = g.lengths()[1];
            let (a2, q3) = (rng.gen_range(0.0..0.3), rng.gen_range(-0.3..0.3));
            a.push_str(&format!(" + {a2}*sin(2*pi*y/{l1})"));
            pot.push_str(&format!(" + {q3}*cos(2*pi*(x/{l0} + y/{l1}))"));
            vec![rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)]
        } else {
            vec![rng.gen_range(-1.5..1.5)]
        };
        let potential = PeriodicField::scalar(g, s.parse(&pot, "random potential")?)?;
        let gd = gradient_drift(&potential)?;
        let set = CoefficientSet::new(
            PeriodicField::isotropic(g, s.parse(&a, "random diffusion")?)?,
            gd.drift,
            PeriodicField::scalar(g, s.parse(&mu, "random growth")?)?,
        )?;
        cases.push((format!("random {i}"), set, lam));
    }
    out.columns(&["k_lambda", "lower_bound", "margin"]);
    let rows = out.sweep(&cases, |c| c.0.clone(), |(_, set, lam)| {
        let k = principal_k(set, lam, &s.grid, RouteChoice::Steady)?;
        let lb = compjlambda_lower_bound(set, lam, &s.grid)?;
        Ok(vec![("k_lambda", k), ("lower_bound", lb), ("margin", k - lb)])
    });
    let tol = s.tolerances().ordering;
    for (r, case) in rows.zip(&cases) {
        out.check(
            format!("{}: k_lambda >= lower bound", case.0),
            Relation::AtLeast,
            out.get(r, "k_lambda"),
            out.get(r, "lower_bound"),
            tol,
        );
    }
    Ok(())
}

fn simulate_validate(s: &Scenario, out: &mut Output) -> Result<()> {
    let c = &s.coeffs;
    let g = &s.geometry;
    if g.dim() != 1 {
        bail!("Cauchy runs are one-dimensional");
    }
    let sw = s.sweep();
    let cells = sw.cells.unwrap_or(180);
    let t_end = sw.t_end.unwrap_or(40.0);
    let ppc = sw.points_per_cell.unwrap_or(16);
    let fraction = sw.fit_fraction.unwrap_or(0.5);
    let sim_grid = Grid::new(g, &[ppc], ppc)?;
    let opts = CauchyOptions {
        left_cells: sw.left_cells,
        ..CauchyOptions::default()
    };
    let directions = sw.directions.clone().unwrap_or_else(|| vec![vec![1.0], vec![-1.0]]);
    let bump = InitialData::Bump {
        center: 0.0,
        half_width: g.lengths()[0],
        height: 1.0,
    };
    let t0 = Instant::now();
    let run = solve_cauchy(c, &bump, cells, t_end, &sim_grid, &opts)?;
    let sim_seconds = t0.elapsed().as_secs_f64();
    out.columns(&["c_star", "front_speed", "relative_error", "fit_residual", "min_gap", "min_u", "max_u"]);
    let run_ref = &run;
    let rows = out.sweep(&directions, |e| dir_label(e), |e| {
        let cs = c_star(s, c, e)?;
        let f = front_speed(run_ref, e, 0.5, fraction)?;
        Ok(vec![
            ("c_star", cs),
            ("front_speed", f.speed),
            ("relative_error", (f.speed - cs) / cs),
            ("fit_residual", f.residual),
        ])
    });
    let tol = s.tolerances();
    out.check(
        "run stayed clear of the domain ends",
        Relation::Equal,
        Some(if run.valid { 1.0 } else { 0.0 }),
        Some(1.0),
        0.0,
    );
    for r in rows {
        let cs = out.get(r, "c_star");
        out.check(
            format!("{}: front speed within {} of c*", out.rows[r].label, tol.front),
            Relation::Equal,
            out.get(r, "front_speed"),
            cs,
            tol.front * cs.map_or(0.0, f64::abs),
        );
    }
    out.artifacts.snapshots.push(("front".into(), run.snapshots.clone()));

    let instances = sw.instances.unwrap_or(0);
    if instances > 0 {
        let seed = seed(s);
        out.seed = Some(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let small = 12;
        let len = small * ppc;
        let horizon = 1.5 * g.period();
        let mut jobs = Vec::new();
        for i in 0..instances {
            let lo: Vec<f64> = (0..len)
                .map(|k| if k > len / 3 && k < 2 * len / 3 { rng.gen_range(0.0..1.0) } else { 0.0 })
                .collect();
            let hi: Vec<f64> = lo.iter().map(|v| (v + rng.gen_range(0.0..0.3)).min(1.0)).collect();
            jobs.push((format!("comparison {i}"), lo, hi));
        }
        let rows = out.sweep(&jobs, |j| j.0.clone(), |(_, lo, hi)| {
            let o = CauchyOptions::default();
            let ra = solve_cauchy(c, &InitialData::Values(lo.clone()), small, horizon, &sim_grid, &o)?;
            let rb = solve_cauchy(c, &InitialData::Values(hi.clone()), small, horizon, &sim_grid, &o)?;
            let (mut gap, mut min, mut max) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY);
            for ((_, ua), (_, ub)) in ra.snapshots.iter().zip(&rb.snapshots) {
                for (a, b) in ua.iter().zip(ub) {
                    gap = gap.min(b - a);
                    min = min.min(a.min(*b));
                    max = max.max(a.max(*b));
                }
            }
            Ok(vec![("min_gap", gap), ("min_u", min), ("max_u", max)])
        });
        for r in rows {
            let name = out.rows[r].label.clone();
            out.check(format!("{name}: ordered data stay ordered"), Relation::AtLeast, out.get(r, "min_gap"), Some(0.0), tol.ordering);
            out.check(format!("{name}: u >= 0"), Relation::AtLeast, out.get(r, "min_u"), Some(0.0), tol.ordering);
            out.check(format!("{name}: u <= 1"), Relation::AtMost, out.get(r, "max_u"), Some(1.0), tol.ordering);
        }
    }
    out.notes.push(format!(
        "{cells} cells, t_end = {t_end}, dt = {}, simulation took {sim_seconds:.3} s",
        run.dt
    ));
    Ok(())
}
