//! Principal eigenvalue `k_λ` of `L_λ = ∂_t − E_λ` and its positive
//! eigenfunction, by inverse iteration (steady coefficients) or by power
//! iteration on the period map.

use crate::error::{Error, Result};
use crate::fields::{CoefficientSet, PeriodicField};
use crate::operator::banded::interleaved_permutation;
use crate::operator::{assemble_action, BandLu, CsrMatrix, Grid, GridFunction, LinearAction, PeriodMap};

pub const EIGEN_TOLERANCE: f64 = 1e-10;
pub const SANDWICH_TOLERANCE: f64 = 1e-6;
pub const ADJOINT_TOLERANCE: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Steady,
    Floquet,
    ClosedForm,
}

/// Which solver to use; `Auto` picks the steady route for time-independent
/// coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RouteChoice {
    #[default]
    Auto,
    Steady,
    Floquet,
}

impl RouteChoice {
    fn resolve(self, coeffs: &CoefficientSet) -> Route {
        match self {
            RouteChoice::Steady => Route::Steady,
            RouteChoice::Floquet => Route::Floquet,
            RouteChoice::Auto => {
                if coeffs.is_time_independent_verified() {
                    Route::Steady
                } else {
                    Route::Floquet
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub k: f64,
    /// One level for the steady route, `n_t` levels `t_n = nΔt` otherwise.
    /// Normalized so the largest value is 1.
    pub family: Vec<Vec<f64>>,
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    pub route: Route,
    pub grid: Grid,
    pub lambda: Vec<f64>,
}

impl EigenResult {
    /// Eigenfunction at `t = 0`.
    pub fn phi(&self) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: self.family[0].clone(),
        }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn min_value(&self) -> f64 {
        family_min(&self.family)
    }
}

/// Direct and adjoint eigenfunctions sharing `k`, scaled so `∫∫ φ φ̃ = 1`.
#[derive(Debug, Clone)]
pub struct AdjointPair {
    pub k: f64,
    pub k_adjoint: f64,
    pub phi: Vec<Vec<f64>>,
    pub phi_tilde: Vec<Vec<f64>>,
    pub route: Route,
    pub grid: Grid,
}

impl AdjointPair {
    /// Time weight of each stored level in space-time integrals.
    fn level_weight(&self) -> f64 {
        self.grid.geometry().period() / self.phi.len() as f64
    }

    /// `∫_0^T ∫_C f φ φ̃`, with `f` evaluated at `(t_n, node)`.
    pub fn weighted_integral(&self, f: impl Fn(usize, usize) -> f64) -> f64 {
        let w = self.level_weight() * self.grid.cell_weight();
        let n_levels = self.phi.len();
        let mut s = 0.0;
        for lvl in 0..n_levels {
            for i in 0..self.grid.len() {
                s += f(lvl, i) * self.phi[lvl][i] * self.phi_tilde[lvl][i];
            }
        }
        w * s
    }

    pub fn normalization(&self) -> f64 {
        self.weighted_integral(|_, _| 1.0)
    }
}

fn family_min(f: &[Vec<f64>]) -> f64 {
    f.iter().flatten().copied().fold(f64::INFINITY, f64::min)
}

fn family_max(f: &[Vec<f64>]) -> f64 {
    f.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn scale_family(f: &mut [Vec<f64>], c: f64) {
    f.iter_mut().flatten().for_each(|v| *v *= c);
}

fn converged(dk: f64, k: f64) -> bool {
    dk.abs() <= EIGEN_TOLERANCE * k.abs().max(1.0)
}

struct SteadyOutcome {
    k: f64,
    phi: Vec<f64>,
    iterations: usize,
}

/// Inverse iteration for the eigenvalue of `m = −E` with the smallest real
/// part. The shift stays below the certified lower bound
/// `min (m y)_i / y_i`, so `(m − s)⁻¹` keeps the principal mode dominant;
/// it is moved up as the bound tightens.
fn steady_iteration(m: &CsrMatrix, perm: &[usize], start: Option<&[f64]>) -> Result<SteadyOutcome> {
    let n = m.rows();
    let row_sums = m.row_sums();
    let mut shift = row_sums.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let mut lu = BandLu::factor(&m.shifted(-shift, 1.0), perm)?;
    let mut phi = start.map(|s| s.to_vec()).unwrap_or_else(|| vec![1.0; n]);
    let mut k_prev = f64::NAN;
    let mut last_change = f64::INFINITY;
    for it in 1..=MAX_ITERATIONS {
        let mut y = phi.clone();
        lu.solve(&mut y);
        let sum_phi: f64 = phi.iter().sum();
        let sum_y: f64 = y.iter().sum();
        let k = shift + sum_phi / sum_y;
        let positive = y.iter().all(|&v| v > 0.0) && sum_y > 0.0;
        let (lo, hi) = if positive {
            phi.iter().zip(&y).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (p, v)| {
                let r = p / v;
                (lo.min(r), hi.max(r))
            })
        } else {
            (f64::NAN, f64::NAN)
        };
        let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let flip = if ymax > 0.0 { 1.0 } else { -1.0 };
        let scale = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
        phi = y.iter().map(|v| flip * v / scale).collect();
        let width = hi - lo;
        last_change = (k - k_prev).abs();
        if positive && it > 1 && converged(k - k_prev, k) && width <= SANDWICH_TOLERANCE {
            return Ok(SteadyOutcome { k, phi, iterations: it });
        }
        k_prev = k;
        if positive {
            let lower = shift + lo;
            let target = lower - (10.0 * width).max(1e-4 * (1.0 + lower.abs()));
            if target > shift + 0.5 * (lower - shift) {
                shift = target;
                lu = BandLu::factor(&m.shifted(-shift, 1.0), perm)?;
            }
        }
    }
    Err(Error::NoConvergence {
        what: "steady inverse iteration",
        iterations: MAX_ITERATIONS,
        residual: last_change,
    })
}

fn require_time_independent(coeffs: &CoefficientSet) -> Result<()> {
    if coeffs.is_time_independent_verified() {
        Ok(())
    } else {
        Err(Error::TimeDependent("the steady route needs time-independent coefficients".into()))
    }
}

fn steady_solve(action: &LinearAction, start: Option<&[f64]>) -> Result<SteadyOutcome> {
    let m = action.matrix(0.0).shifted(0.0, -1.0);
    let perm = interleaved_permutation(action.grid().n());
    let out = steady_iteration(&m, &perm, start)?;
    let min = out.phi.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        return Err(Error::SignViolation { min });
    }
    Ok(out)
}

/// Steady principal eigenpair `−E_λφ = kφ`.
pub fn principal_eigen_steady(coeffs: &CoefficientSet, lambda: &[f64], grid: &Grid) -> Result<EigenResult> {
    require_time_independent(coeffs)?;
    let action = assemble_action(coeffs, lambda, grid, false)?;
    let out = steady_solve(&action, None)?;
    let family = vec![out.phi];
    let (lower, upper) = sandwich_with(&action, &family)?;
    Ok(EigenResult {
        k: out.k,
        family,
        lower,
        upper,
        iterations: out.iterations,
        route: Route::Steady,
        grid: grid.clone(),
        lambda: lambda.to_vec(),
    })
}

struct FloquetOutcome {
    k: f64,
    /// `−(M(T) + ln ρ)/T`, the exponent that makes the family periodic.
    k_period: f64,
    levels: Vec<Vec<f64>>,
    iterations: usize,
}

/// Power iteration on the reduced period map (or its transpose), started
/// from a damped pass over the constant vector.
///
/// With `E' = E − mI` time-independent, one Crank–Nicolson step multiplies
/// the principal mode by the Cayley factor `(1 − Δt k'/2)/(1 + Δt k'/2)`;
/// inverting it, `k' = (2/Δt)·tanh(Δt k_cn/2)`, recovers the steady
/// eigenvalue exactly, and is a second-order change otherwise.
fn floquet_iteration(map: &PeriodMap) -> Result<FloquetOutcome> {
    let grid = map.grid();
    let period = grid.geometry().period();
    let mut u = map.apply_damped(&vec![1.0; grid.len()])?;
    let top = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    u.iter_mut().for_each(|v| *v /= top);
    let mut k_prev = f64::NAN;
    let mut last_change = f64::INFINITY;
    for it in 1..=MAX_ITERATIONS {
        let (pu, levels) = map.apply(&u, true)?;
        let rho = pu.iter().sum::<f64>() / u.iter().sum::<f64>();
        if !(rho > 0.0) {
            return Err(Error::NonPositiveMultiplier(rho));
        }
        let k = -rho.ln() / period;
        let mean_rate = map.growth_integral(grid.n_t()) / period;
        let scale = pu.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let next: Vec<f64> = pu.iter().map(|v| v / scale).collect();
        let drift = next.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        last_change = (k - k_prev).abs();
        if it > 2 && converged(k - k_prev, k) && drift <= 1e-9 {
            let dt = grid.dt();
            return Ok(FloquetOutcome {
                k: (2.0 / dt) * (0.5 * dt * k).tanh() - mean_rate,
                k_period: k - mean_rate,
                levels,
                iterations: it,
            });
        }
        k_prev = k;
        u = next;
    }
    Err(Error::NoConvergence {
        what: "period-map power iteration",
        iterations: MAX_ITERATIONS,
        residual: last_change,
    })
}

/// Periodic eigenfunction family `ψ_n = e^{±(k t_n + M(t_n))} v_n`, max 1.
fn periodic_family(out: &FloquetOutcome, map: &PeriodMap, adjoint: bool) -> Result<Vec<Vec<f64>>> {
    let grid = map.grid();
    let sign = if adjoint { -1.0 } else { 1.0 };
    let mut fam: Vec<Vec<f64>> = out
        .levels
        .iter()
        .enumerate()
        .map(|(n, lvl)| {
            let g = (sign * (out.k_period * grid.time(n) + map.growth_integral(n))).exp();
            lvl.iter().map(|v| g * v).collect()
        })
        .collect();
    let top = family_max(&fam);
    scale_family(&mut fam, 1.0 / top);
    let min = family_min(&fam);
    if min <= 0.0 {
        return Err(Error::SignViolation { min });
    }
    Ok(fam)
}

/// Space-time periodic principal eigenpair via the period map,
/// `k = −ln ρ / T`.
pub fn principal_eigen_floquet(coeffs: &CoefficientSet, lambda: &[f64], grid: &Grid) -> Result<EigenResult> {
    let action = assemble_action(coeffs, lambda, grid, false)?;
    let map = PeriodMap::new(&action)?;
    let out = floquet_iteration(&map)?;
    let family = periodic_family(&out, &map, false)?;
    let (lower, upper) = floquet_sandwich(&action, &family, &map, out.k_period)?;
    Ok(EigenResult {
        k: out.k,
        family,
        lower,
        upper,
        iterations: out.iterations,
        route: Route::Floquet,
        grid: grid.clone(),
        lambda: lambda.to_vec(),
    })
}

pub fn principal_eigen(coeffs: &CoefficientSet, lambda: &[f64], grid: &Grid, route: RouteChoice) -> Result<EigenResult> {
    match route.resolve(coeffs) {
        Route::Floquet => principal_eigen_floquet(coeffs, lambda, grid),
        _ => principal_eigen_steady(coeffs, lambda, grid),
    }
}

/// Just `k_λ`.
pub fn principal_k(coeffs: &CoefficientSet, lambda: &[f64], grid: &Grid, route: RouteChoice) -> Result<f64> {
    principal_eigen(coeffs, lambda, grid, route).map(|r| r.k)
}

/// Steady `k_λ` extrapolated from `grid` and its refinement, cancelling the
/// leading `h²` error: `(4 k_{h/2} − k_h) / 3`.
pub fn principal_eigen_extrapolated(coeffs: &CoefficientSet, lambda: &[f64], grid: &Grid) -> Result<f64> {
    let coarse = principal_eigen_steady(coeffs, lambda, grid)?.k;
    let fine = principal_eigen_steady(coeffs, lambda, &grid.refined()?)?.k;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Direct and adjoint principal eigenfunctions with `∫∫ φ φ̃ = 1`.
pub fn adjoint_eigenpair(coeffs: &CoefficientSet, lambda: &[f64], grid: &Grid, route: RouteChoice) -> Result<AdjointPair> {
    let route = route.resolve(coeffs);
    let direct = assemble_action(coeffs, lambda, grid, false)?;
    let adjoint = direct.flipped();
    let (k, k_adjoint, phi, phi_tilde) = match route {
        Route::Floquet => {
            let dmap = PeriodMap::new(&direct)?;
            let amap = PeriodMap::new(&adjoint)?;
            let d = floquet_iteration(&dmap)?;
            let a = floquet_iteration(&amap)?;
            let phi = periodic_family(&d, &dmap, false)?;
            let phi_tilde = periodic_family(&a, &amap, true)?;
            (d.k, a.k, phi, phi_tilde)
        }
        _ => {
            require_time_independent(coeffs)?;
            let d = steady_solve(&direct, None)?;
            let a = steady_solve(&adjoint, Some(&d.phi))?;
            (d.k, a.k, vec![d.phi], vec![a.phi])
        }
    };
    if (k - k_adjoint).abs() > ADJOINT_TOLERANCE * k.abs().max(1.0) {
        return Err(Error::EigenMismatch { direct: k, adjoint: k_adjoint });
    }
    let mut pair = AdjointPair {
        k,
        k_adjoint,
        phi,
        phi_tilde,
        route,
        grid: grid.clone(),
    };
    let norm = pair.normalization();
    scale_family(&mut pair.phi_tilde, 1.0 / norm);
    Ok(pair)
}

/// Closed form for space-independent coefficients,
/// `k_λ = −(1/T)∫_0^T (λAλ − λ·q + μ) dt`, by the periodic trapezoid rule
/// on `points` nodes.
pub fn k_x_independent(coeffs: &CoefficientSet, lambda: &[f64], points: usize) -> Result<f64> {
    if !coeffs.is_space_independent_verified() {
        return Err(Error::SpaceDependent("closed form needs x-independent coefficients".into()));
    }
    let n = coeffs.dim();
    if lambda.len() != n {
        return Err(Error::Dimension(format!("λ has {} entries, cell dimension is {n}", lambda.len())));
    }
    let period = coeffs.geometry().period();
    let points = points.max(2);
    let x = [0.0; 2];
    let mut s = 0.0;
    for p in 0..points {
        let t = p as f64 * period / points as f64;
        let q = coeffs.drift.values(t, &x[..n]);
        let mu = coeffs.growth.value(t, &x[..n]);
        let mut lal = 0.0;
        for i in 0..n {
            for j in 0..n {
                lal += lambda[i] * coeffs.diffusion.entry(i, j).eval(t, &x[..n]) * lambda[j];
            }
        }
        let lq: f64 = lambda.iter().zip(&q).map(|(l, qi)| l * qi).sum();
        s += lal - lq + mu;
    }
    Ok(-s / points as f64)
}

/// Residual bounds `min r ≤ k_λ ≤ max r` with `r = (∂_tφ − E_λφ)/φ` for a
/// positive candidate. A single level is a time-independent candidate;
/// `n_t` levels are read as `t_n = nΔt` and differenced centrally.
pub fn eigen_sandwich(coeffs: &CoefficientSet, lambda: &[f64], family: &[Vec<f64>], grid: &Grid) -> Result<(f64, f64)> {
    let action = assemble_action(coeffs, lambda, grid, false)?;
    sandwich_with(&action, family)
}

fn sandwich_with(action: &LinearAction, family: &[Vec<f64>]) -> Result<(f64, f64)> {
    let grid = action.grid();
    if family.is_empty() || family.iter().any(|l| l.len() != grid.len()) {
        return Err(Error::Dimension("candidate does not match the grid".into()));
    }
    let min = family_min(family);
    if !(min > 0.0) {
        return Err(Error::NonPositive { min });
    }
    let n_t = grid.n_t();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut push = |r: f64| {
        lo = lo.min(r);
        hi = hi.max(r);
    };
    if family.len() == 1 {
        let levels = if action.is_time_independent() { 1 } else { n_t };
        let phi = &family[0];
        for n in 0..levels {
            let e = action.apply(grid.time(n), phi);
            for i in 0..grid.len() {
                push(-e[i] / phi[i]);
            }
        }
    } else if family.len() == n_t {
        let inv = 1.0 / (2.0 * grid.dt());
        for n in 0..n_t {
            let psi = &family[n];
            let next = &family[(n + 1) % n_t];
            let prev = &family[(n + n_t - 1) % n_t];
            let e = action.apply(grid.time(n), psi);
            for i in 0..grid.len() {
                push(((next[i] - prev[i]) * inv - e[i]) / psi[i]);
            }
        }
    } else {
        return Err(Error::Dimension(format!(
            "candidate has {} levels; expected 1 or {n_t}",
            family.len()
        )));
    }
    Ok((lo, hi))
}

/// Residual bounds for `ψ_n = e^{a(t_n)} w_n` with `a(t) = k_p t + M(t)`:
/// `∂_t a = k_p + m_n` is taken exactly at the levels and only `w` is
/// differenced centrally.
fn floquet_sandwich(action: &LinearAction, family: &[Vec<f64>], map: &PeriodMap, k_period: f64) -> Result<(f64, f64)> {
    let grid = action.grid();
    let n_t = grid.n_t();
    if family.len() != n_t || family.iter().any(|l| l.len() != grid.len()) {
        return Err(Error::Dimension("candidate does not match the grid".into()));
    }
    let min = family_min(family);
    if !(min > 0.0) {
        return Err(Error::NonPositive { min });
    }
    let dt = grid.dt();
    // a(t_{n+1}) − a(t_n)
    let step = |n: usize| k_period * dt + 0.5 * dt * (map.rate(n) + map.rate(n + 1));
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for n in 0..n_t {
        let psi = &family[n];
        let next = &family[(n + 1) % n_t];
        let prev = &family[(n + n_t - 1) % n_t];
        let (up, down) = ((-step(n)).exp(), step(n + n_t - 1).exp());
        let rate = k_period + map.rate(n);
        let e = action.apply(grid.time(n), psi);
        for i in 0..grid.len() {
            let dw = (next[i] * up - prev[i] * down) / (2.0 * dt);
            let r = rate + (dw - e[i]) / psi[i];
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    Ok((lo, hi))
}

/// `d/dB k_λ(A, q, μ + Bη)` at `B = 0`, equal to `−∫∫ η φ φ̃` for the
/// normalized adjoint pair.
#[allow(non_snake_case)]
pub fn dk_dB_at_zero(
    coeffs: &CoefficientSet,
    lambda: &[f64],
    eta: &PeriodicField,
    grid: &Grid,
    route: RouteChoice,
) -> Result<f64> {
    let pair = adjoint_eigenpair(coeffs, lambda, grid, route)?;
    let d = grid.dim();
    let steady = pair.phi.len() == 1;
    let n_t = grid.n_t();
    let eta_levels: Vec<Vec<f64>> = if steady {
        // time average of η at each node
        let mut avg = vec![0.0; grid.len()];
        let levels = if eta.is_time_independent() { 1 } else { n_t };
        for n in 0..levels {
            let t = if levels == 1 { 0.0 } else { grid.time(n) };
            for (i, a) in avg.iter_mut().enumerate() {
                *a += eta.value(t, &grid.point(i)[..d]) / levels as f64;
            }
        }
        vec![avg]
    } else {
        (0..n_t).map(|n| grid.sample_field(eta, grid.time(n))).collect()
    };
    Ok(-pair.weighted_integral(|lvl, i| eta_levels[lvl][i]))
}
