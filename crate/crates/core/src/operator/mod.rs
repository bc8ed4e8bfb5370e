//! Finite-difference discretization of `E_λ` on a periodic grid and
//! one-period Crank–Nicolson stepping.
//!
//! `E_λφ = ∇·(A∇φ) + 2λA∇φ − q·∇φ + (λAλ + ∇·(Aλ) + μ − q·λ)φ`, so that the
//! λ-shifted parabolic operator is `L_λ = ∂_t − E_λ`.

pub mod banded;
pub mod sparse;
mod stepping;

pub use banded::BandLu;
pub use sparse::CsrMatrix;
pub use stepping::{step_period, PeriodMap};

use crate::error::{Error, Result};
use crate::fields::{CellGeometry, CoefficientSet, PeriodicField, ScalarFn};

pub const MIN_POINTS: usize = 8;
pub const DEFAULT_UNKNOWN_CAP: usize = 1 << 20;

/// Uniform periodic space grid plus the number of time steps per period.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    geometry: CellGeometry,
    n: Vec<usize>,
    n_t: usize,
}

impl Grid {
    pub fn new(geometry: &CellGeometry, n_space: &[usize], n_t: usize) -> Result<Self> {
        Self::with_cap(geometry, n_space, n_t, DEFAULT_UNKNOWN_CAP)
    }

    pub fn with_cap(geometry: &CellGeometry, n_space: &[usize], n_t: usize, cap: usize) -> Result<Self> {
        if n_space.len() != geometry.dim() {
            return Err(Error::Grid(format!(
                "{} point counts for a {}-dimensional cell",
                n_space.len(),
                geometry.dim()
            )));
        }
        if let Some(&n) = n_space.iter().find(|&&n| n < MIN_POINTS) {
            return Err(Error::Grid(format!("need at least {MIN_POINTS} points per axis, got {n}")));
        }
        if n_t < MIN_POINTS {
            return Err(Error::Grid(format!("need at least {MIN_POINTS} time steps, got {n_t}")));
        }
        let total = n_space.iter().try_fold(1usize, |acc, &n| acc.checked_mul(n));
        match total {
            Some(t) if t <= cap => {}
            _ => {
                return Err(Error::Grid(format!(
                    "{n_space:?} exceeds the cap of {cap} unknowns"
                )))
            }
        }
        Ok(Grid {
            geometry: geometry.clone(),
            n: n_space.to_vec(),
            n_t,
        })
    }

    /// `n` points per axis in every direction.
    pub fn uniform(geometry: &CellGeometry, n: usize, n_t: usize) -> Result<Self> {
        Self::new(geometry, &vec![n; geometry.dim()], n_t)
    }

    pub fn geometry(&self) -> &CellGeometry {
        &self.geometry
    }

    pub fn dim(&self) -> usize {
        self.n.len()
    }

    pub fn n(&self) -> &[usize] {
        &self.n
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h(&self, axis: usize) -> f64 {
        self.geometry.lengths()[axis] / self.n[axis] as f64
    }

    pub fn dt(&self) -> f64 {
        self.geometry.period() / self.n_t as f64
    }

    /// Quadrature weight of one node, `Π h_i`.
    pub fn cell_weight(&self) -> f64 {
        (0..self.dim()).map(|a| self.h(a)).product()
    }

    pub fn time(&self, level: usize) -> f64 {
        level as f64 * self.dt()
    }

    /// Grid indices of a flat node index.
    pub fn coords(&self, idx: usize) -> [usize; 2] {
        [idx % self.n[0], if self.dim() > 1 { idx / self.n[0] } else { 0 }]
    }

    pub fn point(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.coords(idx);
        [i as f64 * self.h(0), if self.dim() > 1 { j as f64 * self.h(1) } else { 0.0 }]
    }

    /// Flat index of the node offset by `d` steps along `axis`, wrapping.
    pub fn shift(&self, idx: usize, axis: usize, d: isize) -> usize {
        let [i, j] = self.coords(idx);
        if axis == 0 {
            let n = self.n[0] as isize;
            let ni = (i as isize + d).rem_euclid(n) as usize;
            ni + self.n[0] * j
        } else {
            let n = self.n[1] as isize;
            let nj = (j as isize + d).rem_euclid(n) as usize;
            i + self.n[0] * nj
        }
    }

    /// Same cell, every resolution doubled.
    pub fn refined(&self) -> Result<Grid> {
        let n: Vec<usize> = self.n.iter().map(|n| 2 * n).collect();
        Grid::new(&self.geometry, &n, 2 * self.n_t)
    }

    pub fn with_n_t(&self, n_t: usize) -> Result<Grid> {
        Grid::new(&self.geometry, &self.n, n_t)
    }

    pub fn sample(&self, f: &ScalarFn, t: f64) -> Vec<f64> {
        let d = self.dim();
        (0..self.len()).map(|idx| f.eval(t, &self.point(idx)[..d])).collect()
    }

    pub fn sample_field(&self, f: &PeriodicField, t: f64) -> Vec<f64> {
        let t = self.geometry.wrap_time(t);
        self.sample(f.component(0), t)
    }

    /// `∫_C u ≈ Π h_i Σ u_i`
    pub fn integrate(&self, u: &[f64]) -> f64 {
        self.cell_weight() * u.iter().sum::<f64>()
    }
}

/// Values on the space grid at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "grid has {} nodes, got {} values",
                grid.len(),
                values.len()
            )));
        }
        Ok(GridFunction {
            grid: grid.clone(),
            values,
        })
    }

    pub fn constant(grid: &Grid, v: f64) -> Self {
        GridFunction {
            grid: grid.clone(),
            values: vec![v; grid.len()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        GridFunction {
            grid: grid.clone(),
            values,
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }
}

/// `E_λ` (or its adjoint) for frozen `λ`, assembled level by level.
#[derive(Debug, Clone)]
pub struct LinearAction {
    coeffs: CoefficientSet,
    lambda: [f64; 2],
    grid: Grid,
    adjoint: bool,
    div_a_lambda: Option<ScalarFn>,
    time_independent: bool,
}

/// Build the direct or adjoint action of `E_λ` on `grid`.
pub fn assemble_action(coeffs: &CoefficientSet, lambda: &[f64], grid: &Grid, adjoint: bool) -> Result<LinearAction> {
    let n = coeffs.dim();
    if lambda.len() != n {
        return Err(Error::Dimension(format!("λ has {} entries, cell dimension is {n}", lambda.len())));
    }
    if grid.geometry() != coeffs.geometry() {
        return Err(Error::Geometry("grid and coefficients use different cells".into()));
    }
    let mut lam = [0.0; 2];
    lam[..n].copy_from_slice(lambda);
    let a = &coeffs.diffusion;
    // ∇·(Aλ) = Σ_i ∂_i Σ_j a_ij λ_j
    let mut terms = Vec::new();
    let mut symbolic = true;
    for i in 0..n {
        for (j, &lj) in lam.iter().enumerate().take(n) {
            if lj == 0.0 {
                continue;
            }
            match a.entry(i, j).partial(i) {
                Some(d) => terms.push((lj, d)),
                None => symbolic = false,
            }
        }
    }
    let div_a_lambda = symbolic.then(|| ScalarFn::linear(terms));
    Ok(LinearAction {
        coeffs: coeffs.clone(),
        lambda: lam,
        grid: grid.clone(),
        adjoint,
        div_a_lambda,
        time_independent: coeffs.is_time_independent_verified(),
    })
}

impl LinearAction {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda[..self.grid.dim()]
    }

    pub fn is_adjoint(&self) -> bool {
        self.adjoint
    }

    pub fn coefficients(&self) -> &CoefficientSet {
        &self.coeffs
    }

    pub fn is_time_independent(&self) -> bool {
        self.time_independent
    }

    /// The same operator with the other orientation.
    pub fn flipped(&self) -> LinearAction {
        LinearAction {
            adjoint: !self.adjoint,
            ..self.clone()
        }
    }

    fn sample(&self, f: &ScalarFn, t: f64) -> Vec<f64> {
        self.grid.sample(f, t)
    }

    /// Zeroth-order coefficient `λAλ + ∇·(Aλ) + μ − q·λ` at the nodes; this is
    /// also the action of the direct operator on constants.
    pub fn zeroth_order(&self, t: f64) -> Vec<f64> {
        let g = &self.grid;
        let n = g.dim();
        let t = g.geometry().wrap_time(t);
        let lam = self.lambda;
        let a = &self.coeffs.diffusion;
        let mu = self.sample(self.coeffs.growth.component(0), t);
        let mut c = mu;
        // Aλ components, needed for both λAλ and the difference fallback
        let mut a_lam = vec![vec![0.0; g.len()]; n];
        for (i, al) in a_lam.iter_mut().enumerate() {
            for (j, &lj) in lam.iter().enumerate().take(n) {
                if lj == 0.0 {
                    continue;
                }
                let aij = self.sample(a.entry(i, j), t);
                for (dst, v) in al.iter_mut().zip(&aij) {
                    *dst += lj * v;
                }
            }
        }
        for i in 0..n {
            let qi = self.sample(self.coeffs.drift.component(i), t);
            for idx in 0..g.len() {
                c[idx] += lam[i] * a_lam[i][idx] - qi[idx] * lam[i];
            }
        }
        match &self.div_a_lambda {
            Some(f) => {
                let d = self.sample(f, t);
                for (ci, v) in c.iter_mut().zip(&d) {
                    *ci += v;
                }
            }
            None => {
                for (i, al) in a_lam.iter().enumerate() {
                    let inv = 1.0 / (2.0 * g.h(i));
                    for idx in 0..g.len() {
                        c[idx] += (al[g.shift(idx, i, 1)] - al[g.shift(idx, i, -1)]) * inv;
                    }
                }
            }
        }
        c
    }

    /// Off-diagonal couplings of the direct operator at time `t` and the
    /// zeroth-order coefficient; the diagonal is `c_i − Σ_j m_ij`.
    fn direct_parts(&self, t: f64) -> (CsrMatrix, Vec<f64>) {
        let g = &self.grid;
        let n = g.dim();
        let len = g.len();
        let t = g.geometry().wrap_time(t);
        let lam = self.lambda;
        let a = &self.coeffs.diffusion;
        let diag_entries: Vec<Vec<f64>> = (0..n).map(|i| self.sample(a.entry(i, i), t)).collect();
        let cross = if n == 2 {
            let e = a.entry(0, 1);
            let zero = e.is_space_independent() && e.is_time_independent() && e.eval(0.0, &[0.0, 0.0]) == 0.0;
            (!zero).then(|| self.sample(e, t))
        } else {
            None
        };
        // first-order coefficient b = 2Aλ − q
        let mut b = vec![vec![0.0; len]; n];
        for (i, bi) in b.iter_mut().enumerate() {
            let qi = self.sample(self.coeffs.drift.component(i), t);
            for (dst, q) in bi.iter_mut().zip(&qi) {
                *dst = -q;
            }
            for (j, &lj) in lam.iter().enumerate().take(n) {
                if lj == 0.0 {
                    continue;
                }
                let aij = if i == j {
                    diag_entries[i].clone()
                } else {
                    self.sample(a.entry(i, j), t)
                };
                for (dst, v) in bi.iter_mut().zip(&aij) {
                    *dst += 2.0 * lj * v;
                }
            }
        }
        let c = self.zeroth_order(t);
        let mut trip = Vec::with_capacity(len * if n == 1 { 3 } else { 9 });
        for idx in 0..len {
            for axis in 0..n {
                let h = g.h(axis);
                let (e, w) = (g.shift(idx, axis, 1), g.shift(idx, axis, -1));
                let aa = &diag_entries[axis];
                let fe = 0.5 * (aa[idx] + aa[e]) / (h * h);
                let fw = 0.5 * (aa[idx] + aa[w]) / (h * h);
                let adv = b[axis][idx] / (2.0 * h);
                trip.push((idx, e, fe + adv));
                trip.push((idx, w, fw - adv));
            }
            if let Some(a12) = &cross {
                let s = 1.0 / (4.0 * g.h(0) * g.h(1));
                let xp = g.shift(idx, 0, 1);
                let xm = g.shift(idx, 0, -1);
                let yp = g.shift(idx, 1, 1);
                let ym = g.shift(idx, 1, -1);
                let pp = g.shift(xp, 1, 1);
                let pm = g.shift(xp, 1, -1);
                let mp = g.shift(xm, 1, 1);
                let mm = g.shift(xm, 1, -1);
                trip.push((idx, pp, s * (a12[xp] + a12[yp])));
                trip.push((idx, pm, -s * (a12[xp] + a12[ym])));
                trip.push((idx, mp, -s * (a12[xm] + a12[yp])));
                trip.push((idx, mm, s * (a12[xm] + a12[ym])));
            }
        }
        (CsrMatrix::from_triplets(len, len, trip), c)
    }

    fn direct_matrix(&self, t: f64) -> CsrMatrix {
        let (off, c) = self.direct_parts(t);
        let len = off.rows();
        let mut trip = Vec::with_capacity(off.nnz() + len);
        for (r, &cr) in c.iter().enumerate() {
            let mut diag = cr;
            for (col, v) in off.row(r) {
                trip.push((r, col, v));
                diag -= v;
            }
            trip.push((r, r, diag));
        }
        CsrMatrix::from_triplets(len, len, trip)
    }

    /// Matrix of this action (direct or adjoint) at time `t`.
    pub fn matrix(&self, t: f64) -> CsrMatrix {
        let m = self.direct_matrix(t);
        if self.adjoint {
            m.transpose()
        } else {
            m
        }
    }

    pub fn matrix_at_level(&self, level: usize) -> CsrMatrix {
        self.matrix(self.grid.time(level))
    }

    /// `E_λ[φ](t, ·)` (or the adjoint). The direct action is evaluated in
    /// difference form, so constants map exactly to the zeroth-order term.
    pub fn apply(&self, t: f64, phi: &[f64]) -> Vec<f64> {
        if self.adjoint {
            return self.matrix(t).mul_vec(phi);
        }
        let (off, c) = self.direct_parts(t);
        (0..phi.len())
            .map(|r| c[r] * phi[r] + off.row(r).map(|(col, v)| v * (phi[col] - phi[r])).sum::<f64>())
            .collect()
    }
}

impl CoefficientSet {
    /// Time independence from the declared flags, else by sampling.
    pub fn is_time_independent_verified(&self) -> bool {
        self.is_time_independent()
            || (self.diffusion.verify_time_independent().is_ok()
                && self.drift.verify_time_independent().is_ok()
                && self.growth.verify_time_independent().is_ok())
    }

    pub fn is_space_independent_verified(&self) -> bool {
        self.is_space_independent()
            || (self.diffusion.verify_space_independent().is_ok()
                && self.drift.verify_space_independent().is_ok()
                && self.growth.verify_space_independent().is_ok())
    }
}
