//! The nonlinear problem `u_t = ∇·(A∇u) − q·∇u + μ u(1−u)` on a line of
//! repeated cells, for measuring front speeds.
//!
//! Strang splitting: an exact logistic half step with `μ` frozen at the
//! substep midpoint, one Crank–Nicolson step of the linear part, another
//! logistic half step. Boundary values stay at their initial values, which
//! is homogeneous Dirichlet for compactly supported data.

use crate::error::{Error, Result};
use crate::fields::{ellipticity_bounds, CoefficientSet};
use crate::operator::Grid;

const LOWER_SLACK: f64 = 1e-8;
const UPPER_SLACK: f64 = 1e-6;

/// Initial condition on the extended line.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    /// `height` on `|x − center| < half_width`, zero elsewhere.
    Bump { center: f64, half_width: f64, height: f64 },
    Constant(f64),
    /// Node values, one per point of the extended grid.
    Values(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CauchyOptions {
    /// Cells to the left of `x = 0`; defaults to half of the domain.
    pub left_cells: Option<usize>,
    /// Time between stored snapshots (rounded to whole steps).
    pub snapshot_interval: f64,
    /// Level whose crossing near the boundary invalidates the run.
    pub level: f64,
    /// Width of the boundary zone, in cells.
    pub margin_cells: usize,
}

impl Default for CauchyOptions {
    fn default() -> Self {
        CauchyOptions {
            left_cells: None,
            snapshot_interval: 0.25,
            level: 0.5,
            margin_cells: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CauchyRun {
    /// `(t, u)` pairs, the first at `t = 0`.
    pub snapshots: Vec<(f64, Vec<f64>)>,
    /// Position of node 0.
    pub x0: f64,
    pub h: f64,
    pub dt: f64,
    pub cells: usize,
    /// Extended domain length `R·L`.
    pub length: f64,
    /// Level followed by the validity check.
    pub level: f64,
    /// False once the level entered the boundary zone.
    pub valid: bool,
    pub boundary_hit: Option<f64>,
}

impl CauchyRun {
    pub fn x(&self, index: usize) -> f64 {
        self.x0 + index as f64 * self.h
    }
}

/// Solve the tridiagonal system `(sub, diag, sup)·x = rhs` in place (Thomas
/// algorithm; the systems here are diagonally dominant M-matrices).
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64], scratch: &mut [f64]) {
    let n = diag.len();
    scratch[0] = sup[0] / diag[0];
    rhs[0] /= diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i] * scratch[i - 1];
        scratch[i] = sup[i] / m;
        rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= scratch[i] * rhs[i + 1];
    }
}

/// Neighbour weights of the linear operator at time `t`:
/// `(Lu)_i = w⁻_i (u_{i−1} − u_i) + w⁺_i (u_{i+1} − u_i)`.
fn weights(coeffs: &CoefficientSet, xs: &[f64], h: f64, t: f64) -> (Vec<f64>, Vec<f64>) {
    let a = coeffs.diffusion.entry(0, 0);
    let q = coeffs.drift.component(0);
    let n = xs.len();
    let mut left = vec![0.0; n];
    let mut right = vec![0.0; n];
    let av: Vec<f64> = std::iter::once(xs[0] - h)
        .chain(xs.iter().copied())
        .chain(std::iter::once(xs[n - 1] + h))
        .map(|x| a.eval(t, &[x]))
        .collect();
    for i in 0..n {
        let qi = q.eval(t, &[xs[i]]);
        let am = 0.5 * (av[i] + av[i + 1]);
        let ap = 0.5 * (av[i + 1] + av[i + 2]);
        left[i] = am / (h * h) + qi / (2.0 * h);
        right[i] = ap / (h * h) - qi / (2.0 * h);
    }
    (left, right)
}

fn logistic(u: &mut [f64], mu: &[f64], tau: f64) {
    for (v, &m) in u.iter_mut().zip(mu) {
        let e = (-m * tau).exp();
        let d = *v + (1.0 - *v) * e;
        *v = if d == 0.0 { 0.0 } else { *v / d };
    }
}

/// Solve on `cells` copies of the cell along the line, with `grid` giving the
/// points per cell and the time steps per period. The time step is `T/n_t`,
/// divided further until `Δt ≤ h²/Γ`.
pub fn solve_cauchy(
    coeffs: &CoefficientSet,
    u0: &InitialData,
    cells: usize,
    t_end: f64,
    grid: &Grid,
    opts: &CauchyOptions,
) -> Result<CauchyRun> {
    if coeffs.dim() != 1 || grid.dim() != 1 {
        return Err(Error::Dimension("the Cauchy solver is one-dimensional".into()));
    }
    if cells < 2 * opts.margin_cells + 1 {
        return Err(Error::Invalid(format!("need more than {} cells", 2 * opts.margin_cells)));
    }
    if !(t_end >= 0.0) {
        return Err(Error::Invalid("t_end must be nonnegative".into()));
    }
    let cell = coeffs.geometry().lengths()[0];
    let per_cell = grid.n()[0];
    let h = cell / per_cell as f64;
    let len = cells * per_cell;
    let left_cells = opts.left_cells.unwrap_or(cells / 2);
    let x0 = -(left_cells as f64) * cell + 0.5 * h;
    let xs: Vec<f64> = (0..len).map(|i| x0 + i as f64 * h).collect();

    let mut u: Vec<f64> = match u0 {
        InitialData::Bump {
            center,
            half_width,
            height,
        } => xs
            .iter()
            .map(|x| if (x - center).abs() < *half_width { *height } else { 0.0 })
            .collect(),
        InitialData::Constant(c) => vec![*c; len],
        InitialData::Values(v) => {
            if v.len() != len {
                return Err(Error::Dimension(format!("initial data needs {len} values, got {}", v.len())));
            }
            v.clone()
        }
    };
    if u.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::Invalid("initial data must be nonnegative".into()));
    }
    let cap = u.iter().copied().fold(1.0, f64::max);
    let (bl, br) = (u[0], u[len - 1]);

    let (_, gamma_max) = ellipticity_bounds(&coeffs.diffusion, 64)?;
    let period = coeffs.geometry().period();
    let mut dt = period / grid.n_t() as f64;
    while dt > h * h / gamma_max {
        dt *= 0.5;
    }
    let steps = (t_end / dt).round() as usize;
    let every = ((opts.snapshot_interval / dt).round() as usize).max(1);
    let time_independent = coeffs.is_time_independent_verified();

    let sample_mu = |t: f64| -> Vec<f64> { xs.iter().map(|x| coeffs.growth.component(0).eval(t, &[*x])).collect() };
    let mut w_now = weights(coeffs, &xs, h, 0.0);
    let mu_fixed = time_independent.then(|| sample_mu(0.0));
    let mut run = CauchyRun {
        snapshots: vec![(0.0, u.clone())],
        x0,
        h,
        dt,
        cells,
        length: cells as f64 * cell,
        level: opts.level,
        valid: true,
        boundary_hit: None,
    };
    let zone = opts.margin_cells * per_cell;
    let (mut sub, mut diag, mut sup) = (vec![0.0; len], vec![0.0; len], vec![0.0; len]);
    let mut rhs = vec![0.0; len];
    let mut scratch = vec![0.0; len];

    for step in 0..steps {
        let t = step as f64 * dt;
        let half = 0.5 * dt;
        match &mu_fixed {
            Some(m) => logistic(&mut u, m, half),
            None => logistic(&mut u, &sample_mu(t + 0.25 * dt), half),
        }
        let w_next = if time_independent {
            w_now.clone()
        } else {
            weights(coeffs, &xs, h, t + dt)
        };
        for i in 0..len {
            let ul = if i == 0 { bl } else { u[i - 1] };
            let ur = if i + 1 == len { br } else { u[i + 1] };
            rhs[i] = u[i] + half * (w_now.0[i] * (ul - u[i]) + w_now.1[i] * (ur - u[i]));
            let (l, r) = (w_next.0[i], w_next.1[i]);
            sub[i] = -half * l;
            sup[i] = -half * r;
            diag[i] = 1.0 + half * (l + r);
        }
        rhs[0] -= sub[0] * bl;
        rhs[len - 1] -= sup[len - 1] * br;
        sub[0] = 0.0;
        sup[len - 1] = 0.0;
        thomas(&sub, &diag, &sup, &mut rhs, &mut scratch);
        std::mem::swap(&mut u, &mut rhs);
        w_now = w_next;
        match &mu_fixed {
            Some(m) => logistic(&mut u, m, half),
            None => logistic(&mut u, &sample_mu(t + 0.75 * dt), half),
        }

        let t_new = (step + 1) as f64 * dt;
        if let Some(&v) = u
            .iter()
            .find(|v| !(**v >= -LOWER_SLACK && **v <= cap + UPPER_SLACK))
        {
            return Err(Error::Instability { t: t_new, value: v });
        }
        if run.valid {
            let hits_left = bl < opts.level && u[..zone].iter().any(|v| *v >= opts.level);
            let hits_right = br < opts.level && u[len - zone..].iter().any(|v| *v >= opts.level);
            if hits_left || hits_right {
                run.valid = false;
                run.boundary_hit = Some(t_new);
            }
        }
        if (step + 1) % every == 0 || step + 1 == steps {
            run.snapshots.push((t_new, u.clone()));
        }
    }
    Ok(run)
}

/// Front positions and their fitted speed.
#[derive(Debug, Clone)]
pub struct FrontEstimate {
    pub level: f64,
    pub times: Vec<f64>,
    /// Signed distance of the crossing along `e`.
    pub positions: Vec<f64>,
    pub speed: f64,
    /// Root-mean-square deviation from the fitted line.
    pub residual: f64,
}

/// Outermost crossing of `level` along `e = ±1`, by linear interpolation.
fn crossing(u: &[f64], run: &CauchyRun, level: f64, forward: bool) -> Option<f64> {
    let n = u.len();
    let idx: Box<dyn Iterator<Item = usize>> = if forward {
        Box::new((0..n).rev())
    } else {
        Box::new(0..n)
    };
    for i in idx {
        if u[i] >= level {
            let j = if forward { i + 1 } else { i.checked_sub(1)? };
            if j >= n {
                return None;
            }
            let w = (u[i] - level) / (u[i] - u[j]);
            let x = run.x(i) + w * (run.x(j) - run.x(i));
            return Some(if forward { x } else { -x });
        }
    }
    None
}

/// Least-squares front speed over the last `fraction` of the snapshots.
pub fn front_speed(run: &CauchyRun, e: &[f64], level: f64, fraction: f64) -> Result<FrontEstimate> {
    if e.len() != 1 || e[0] == 0.0 {
        return Err(Error::Dimension("front direction must be ±1".into()));
    }
    if !run.valid {
        return Err(Error::FrontAtBoundary {
            t: run.boundary_hit.unwrap_or(f64::NAN),
        });
    }
    let forward = e[0] > 0.0;
    let first = ((1.0 - fraction) * run.snapshots.len() as f64).floor() as usize;
    let window = &run.snapshots[first.min(run.snapshots.len().saturating_sub(2))..];
    let mut times = Vec::with_capacity(window.len());
    let mut positions = Vec::with_capacity(window.len());
    for (t, u) in window {
        let x = crossing(u, run, level, forward).ok_or(Error::LevelNotCrossed { level })?;
        times.push(*t);
        positions.push(x);
    }
    let n = times.len() as f64;
    let (mt, mx) = (times.iter().sum::<f64>() / n, positions.iter().sum::<f64>() / n);
    let stt: f64 = times.iter().map(|t| (t - mt).powi(2)).sum();
    let stx: f64 = times.iter().zip(&positions).map(|(t, x)| (t - mt) * (x - mx)).sum();
    if !(stt > 0.0) {
        return Err(Error::Invalid("front fit needs at least two distinct times".into()));
    }
    let speed = stx / stt;
    let residual = (times
        .iter()
        .zip(&positions)
        .map(|(t, x)| (x - mx - speed * (t - mt)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(FrontEstimate {
        level,
        times,
        positions,
        speed,
        residual,
    })
}

#[cfg(test)]
mod tests;
