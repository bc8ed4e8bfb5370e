//! Spreading speeds `c*_e = min_{λ·e<0} k_λ/(λ·e)`.
//!
//! The default search runs along the ray `λ = −s e`, where the objective is
//! `g(s) = −k_{−se}/s`.

pub mod search;

use crate::eigen::{principal_eigen, EigenResult, Route, RouteChoice};
use crate::error::{Error, Result};
use crate::fields::{
    CellGeometry, CoefficientSet, Expression, PeriodicField, ScalarFn, Var, DEFAULT_QUADRATURE_POINTS,
};
use crate::operator::Grid;
use search::{bracket_by_doubling, check_unimodal, golden_section};
use std::f64::consts::PI;

/// Relative changes of the objective below this are treated as flat when
/// checking unimodality.
pub const PROFILE_NOISE: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct SpeedOptions {
    pub route: RouteChoice,
    /// First `s` of the doubling bracket search.
    pub s_start: f64,
    pub s_min: f64,
    pub s_max: f64,
    /// Relative length of the final golden-section interval in `s`.
    pub tolerance: f64,
    /// Also search over ray directions `ξ` with `ξ·e > 0` (2D only).
    pub refine: bool,
}

impl Default for SpeedOptions {
    fn default() -> Self {
        SpeedOptions {
            route: RouteChoice::Auto,
            s_start: 1e-2,
            s_min: 1e-4,
            s_max: 1e4,
            tolerance: 1e-7,
            refine: false,
        }
    }
}

/// One evaluated point of the ray objective with its eigenvalue bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub s: f64,
    pub objective: f64,
    pub k: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone)]
pub struct SpeedResult {
    pub c_star: f64,
    pub lambda_star: Vec<f64>,
    pub e: Vec<f64>,
    /// Ray profile along `e`, in evaluation order.
    pub profile: Vec<ProfilePoint>,
    pub route: Route,
    /// Minimum along the ray `−s e`; equals `c_star` without refinement.
    pub ray_c_star: f64,
}

fn unit(e: &[f64], dim: usize) -> Result<Vec<f64>> {
    if e.len() != dim {
        return Err(Error::Dimension(format!("direction has {} components, cell has {dim}", e.len())));
    }
    let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Err(Error::Invalid("direction must be nonzero".into()));
    }
    Ok(e.iter().map(|v| v / norm).collect())
}

struct Ray {
    s: f64,
    c: f64,
    profile: Vec<ProfilePoint>,
    route: Route,
}

/// Minimize `−k(s)/(s·scale)` over `s`, where `eval(s)` solves at `λ = −sξ`
/// and `scale = ξ·e`.
fn ray_search(
    eval: &mut dyn FnMut(f64) -> Result<EigenResult>,
    scale: f64,
    start: f64,
    opts: &SpeedOptions,
) -> Result<Ray> {
    let mut profile = Vec::new();
    let mut route = Route::Steady;
    let mut samples = Vec::new();
    let (s, c) = {
        let mut f = |s: f64| -> Result<f64> {
            let r = eval(s)?;
            if r.k >= 0.0 {
                return Err(Error::NonNegativeEigenvalue { s, k: r.k });
            }
            let g = -r.k / (s * scale);
            route = r.route;
            profile.push(ProfilePoint {
                s,
                objective: g,
                k: r.k,
                lower: r.lower,
                upper: r.upper,
            });
            Ok(g)
        };
        let (a, b) = bracket_by_doubling(&mut f, start, opts.s_min, opts.s_max, &mut samples)?;
        golden_section(&mut f, a, b, opts.tolerance, &mut samples)?
    };
    check_unimodal(&samples, PROFILE_NOISE)?;
    Ok(Ray { s, c, profile, route })
}

fn check_spreading(k0: f64) -> Result<()> {
    if k0 >= 0.0 {
        Err(Error::NoSpreading { k0 })
    } else {
        Ok(())
    }
}

/// Spreading speed in direction `e` from the principal eigenvalues of the
/// full problem.
pub fn spreading_speed(coeffs: &CoefficientSet, e: &[f64], grid: &Grid, opts: &SpeedOptions) -> Result<SpeedResult> {
    let dim = coeffs.dim();
    let e = unit(e, dim)?;
    check_spreading(principal_eigen(coeffs, &vec![0.0; dim], grid, opts.route)?.k)?;

    let along = |xi: &[f64]| {
        let xi = xi.to_vec();
        move |s: f64| {
            let lambda: Vec<f64> = xi.iter().map(|v| -s * v).collect();
            principal_eigen(coeffs, &lambda, grid, opts.route)
        }
    };
    let ray = ray_search(&mut along(&e), 1.0, opts.s_start, opts)?;
    let mut result = SpeedResult {
        c_star: ray.c,
        lambda_star: e.iter().map(|v| -ray.s * v).collect(),
        e: e.clone(),
        profile: ray.profile,
        route: ray.route,
        ray_c_star: ray.c,
    };
    if opts.refine && dim == 2 {
        let base = e[1].atan2(e[0]);
        let mut best = (0.0, ray.c, ray.s);
        let off_axis = |phi: f64, start: f64| -> (f64, f64) {
            let xi = [(base + phi).cos(), (base + phi).sin()];
            match ray_search(&mut along(&xi), phi.cos(), start, opts) {
                Ok(r) => (r.c, r.s),
                Err(_) => (f64::INFINITY, start),
            }
        };
        for j in [-3, -2, -1, 1, 2, 3] {
            let phi = j as f64 * PI / 8.0;
            let (c, s) = off_axis(phi, ray.s);
            if c < best.1 {
                best = (phi, c, s);
            }
        }
        let lo = (best.0 - PI / 8.0).max(-0.49 * PI);
        let hi = (best.0 + PI / 8.0).min(0.49 * PI);
        let mut starts = best.2;
        let mut samples = Vec::new();
        let mut f = |phi: f64| -> Result<f64> {
            let (c, s) = off_axis(phi, starts);
            if c.is_finite() {
                starts = s;
            }
            Ok(c)
        };
        let (phi, c) = golden_section(&mut f, lo, hi, 1e-4, &mut samples)?;
        if c < best.1 {
            let (_, s) = off_axis(phi, starts);
            best = (phi, c, s);
        }
        if best.1 < result.c_star {
            let xi = [(base + best.0).cos(), (base + best.0).sin()];
            result.c_star = best.1;
            result.lambda_star = xi.iter().map(|v| -best.2 * v).collect();
        }
    }
    Ok(result)
}

/// Period averages `⟨A⟩`, `⟨q⟩`, `⟨μ⟩` of space-independent coefficients.
fn time_averages(coeffs: &CoefficientSet) -> (Vec<Vec<f64>>, Vec<f64>, f64) {
    let dim = coeffs.dim();
    let period = coeffs.geometry().period();
    let pts = DEFAULT_QUADRATURE_POINTS;
    let origin = vec![0.0; dim];
    let avg = |f: &ScalarFn| (0..pts).map(|i| f.eval(period * i as f64 / pts as f64, &origin)).sum::<f64>() / pts as f64;
    let a = (0..dim)
        .map(|i| (0..dim).map(|j| avg(coeffs.diffusion.entry(i, j))).collect())
        .collect();
    let q = (0..dim).map(|i| avg(coeffs.drift.component(i))).collect();
    (a, q, avg(coeffs.growth.component(0)))
}

/// Closed-form speed for space-independent coefficients,
/// `min_{ξ·e>0} [2√(⟨ξAξ⟩⟨μ⟩) + ⟨q⟩·ξ]/(ξ·e)`.
pub fn speed_x_independent(coeffs: &CoefficientSet, e: &[f64]) -> Result<SpeedResult> {
    let dim = coeffs.dim();
    let e = unit(e, dim)?;
    if !coeffs.is_space_independent_verified() {
        return Err(Error::SpaceDependent("closed-form speed needs x-independent coefficients".into()));
    }
    let (a, q, mu) = time_averages(coeffs);
    if !(mu > 0.0) {
        return Err(Error::NonPositiveGrowth(mu));
    }
    let quad = |xi: &[f64]| -> f64 {
        (0..dim)
            .map(|i| (0..dim).map(|j| xi[i] * a[i][j] * xi[j]).sum::<f64>())
            .sum()
    };
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
    // k_λ < 0 for every λ requires λ⟨A⟩λ − ⟨q⟩·λ + ⟨μ⟩ > 0, i.e. ¼ q·⟨A⟩⁻¹q < ⟨μ⟩
    let qaq = if dim == 1 {
        q[0] * q[0] / a[0][0]
    } else {
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        (a[1][1] * q[0] * q[0] - 2.0 * a[0][1] * q[0] * q[1] + a[0][0] * q[1] * q[1]) / det
    };
    if 0.25 * qaq >= mu {
        return Err(Error::NonNegativeEigenvalue {
            s: (mu / (0.25 * qaq)).sqrt(),
            k: 0.25 * qaq - mu,
        });
    }
    let objective = |xi: &[f64]| (2.0 * (quad(xi) * mu).sqrt() + dot(&q, xi)) / dot(xi, &e);

    let xi: Vec<f64> = if dim == 1 {
        vec![e[0].signum()]
    } else {
        let base = e[1].atan2(e[0]);
        let at = |phi: f64| [(base + phi).cos(), (base + phi).sin()];
        let m = 720;
        let step = PI / m as f64;
        let (j, _) = (1..m)
            .map(|j| (j, objective(&at(-0.5 * PI + j as f64 * step))))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("nonempty sampling");
        let centre = -0.5 * PI + j as f64 * step;
        let mut f = |phi: f64| Ok(objective(&at(phi)));
        let mut samples = Vec::new();
        let (phi, _) = golden_section(&mut f, centre - step, centre + step, 1e-12, &mut samples)?;
        at(phi).to_vec()
    };
    let (xa, xq, xe) = (quad(&xi), dot(&q, &xi), dot(&xi, &e));
    let s_star = (mu / xa).sqrt();
    let profile = (-4..=4)
        .map(|j| {
            let s = s_star * 2f64.powf(j as f64 / 2.0);
            let k = -(s * s * xa + s * xq + mu);
            ProfilePoint {
                s,
                objective: -k / (s * xe),
                k,
                lower: k,
                upper: k,
            }
        })
        .collect();
    let c = objective(&xi);
    Ok(SpeedResult {
        c_star: c,
        lambda_star: xi.iter().map(|v| -s_star * v).collect(),
        e,
        profile,
        route: Route::ClosedForm,
        ray_c_star: c,
    })
}

fn sampled_max(f: impl Fn(f64, f64, f64) -> f64, geometry: &CellGeometry) -> f64 {
    let (period, l) = (geometry.period(), geometry.lengths());
    let m = 12;
    let mut worst: f64 = 0.0;
    for it in 0..m {
        for ix in 0..m {
            for iy in 0..m {
                let t = period * (it as f64 + 0.31) / m as f64;
                let x = l[0] * (ix as f64 + 0.17) / m as f64;
                let y = l[1] * (iy as f64 + 0.43) / m as f64;
                worst = worst.max(f(t, x, y).abs());
            }
        }
    }
    worst
}

fn check_shear(coeffs: &CoefficientSet) -> Result<()> {
    if coeffs.dim() != 2 {
        return Err(Error::NotShear("shear reduction is implemented for two space dimensions".into()));
    }
    let g = coeffs.geometry();
    let tol = 1e-12;
    let (a, q, mu) = (&coeffs.diffusion, &coeffs.drift, &coeffs.growth);
    let ev = |f: &ScalarFn, t: f64, x: f64, y: f64| f.eval(t, &[x, y]);
    if sampled_max(|t, x, y| ev(a.entry(0, 1), t, x, y), g) > tol
        || sampled_max(|t, x, y| ev(a.entry(0, 0), t, x, y) - ev(a.entry(1, 1), t, x, y), g) > tol
    {
        return Err(Error::NotShear("diffusion must be a scalar multiple of the identity".into()));
    }
    if sampled_max(|t, x, y| ev(q.component(1), t, x, y), g) > tol {
        return Err(Error::NotShear("drift must be parallel to the first axis".into()));
    }
    for (f, name) in [(a.entry(0, 0), "a"), (q.component(0), "q_1"), (mu.component(0), "μ")] {
        if sampled_max(|t, x, y| ev(f, t, x, y) - ev(f, t, 0.0, y), g) > tol {
            return Err(Error::NotShear(format!("{name} depends on x")));
        }
    }
    Ok(())
}

/// The one-dimensional problem in `y` whose principal eigenvalue at `λ_2`
/// equals `k_λ` of a 2D shear flow: diffusion `a`, no drift, and growth
/// `μ − λ_1 q_1 + λ_1² a`. Entries must be expressions; `y` is renamed to
/// the first space variable of `reduced`.
pub fn shear_reduction(coeffs: &CoefficientSet, lambda: &[f64], reduced: &CellGeometry) -> Result<(CoefficientSet, Vec<f64>)> {
    check_shear(coeffs)?;
    let g = coeffs.geometry();
    if reduced.dim() != 1 || reduced.period() != g.period() || reduced.lengths()[0] != g.lengths()[1] {
        return Err(Error::Geometry("reduced cell must be (T, L_2)".into()));
    }
    let a = coeffs.diffusion.entry(0, 0);
    let mu = ScalarFn::linear(vec![
        (1.0, coeffs.growth.component(0).clone()),
        (-lambda[0], coeffs.drift.component(0).clone()),
        (lambda[0] * lambda[0], a.clone()),
    ]);
    let x = Expression::var(Var::X);
    let rename = |f: &ScalarFn| {
        f.substitute(Var::Y, &x)
            .ok_or_else(|| Error::NotShear("shear reduction needs expression coefficients".into()))
    };
    let set = CoefficientSet::new(
        PeriodicField::isotropic(reduced, rename(a)?)?,
        PeriodicField::zero_vector(reduced),
        PeriodicField::scalar(reduced, rename(&mu)?)?,
    )?;
    Ok((set, vec![lambda[1]]))
}

/// Spreading speed of a 2D shear flow through its reduced 1D eigenproblems
/// on `grid` over `(t, y)`.
pub fn shear_speed(coeffs: &CoefficientSet, e: &[f64], grid: &Grid, opts: &SpeedOptions) -> Result<SpeedResult> {
    let e = unit(e, 2)?;
    let reduced = grid.geometry().clone();
    let solve = |lambda: &[f64]| -> Result<EigenResult> {
        let (set, lam) = shear_reduction(coeffs, lambda, &reduced)?;
        principal_eigen(&set, &lam, grid, opts.route)
    };
    check_spreading(solve(&[0.0, 0.0])?.k)?;
    let mut eval = |s: f64| solve(&[-s * e[0], -s * e[1]]);
    let ray = ray_search(&mut eval, 1.0, opts.s_start, opts)?;
    Ok(SpeedResult {
        c_star: ray.c,
        lambda_star: e.iter().map(|v| -ray.s * v).collect(),
        e,
        profile: ray.profile,
        route: ray.route,
        ray_c_star: ray.c,
    })
}
