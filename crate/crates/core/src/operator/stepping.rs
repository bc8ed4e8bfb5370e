//! One-period Crank–Nicolson propagation of `∂_t u = E_λ(t) u`.
//!
//! Plain Crank–Nicolson multiplies the stiffest grid modes by nearly `−1`
//! per step, so they barely decay. A damped variant, whose first step is
//! two backward-Euler half steps, removes them and is used to clean start
//! vectors before the eigen iterations.
//!
//! The node average `m(t)` of the zeroth-order coefficient is split off and
//! integrated exactly: the map propagates `v` with `u = e^{M(t)} v`,
//! `M(t) = ∫_0^t m`, and Crank–Nicolson only sees `E − m I`.

use super::banded::{interleaved_permutation, BandLu};
use super::sparse::CsrMatrix;
use super::{Grid, GridFunction, LinearAction};
use crate::error::Result;

/// Factor caches larger than this are rebuilt step by step instead.
pub const FACTOR_CACHE_BYTES: usize = 256 << 20;

/// The monodromy map of one time period, forward for the direct operator
/// and backward in time for the adjoint.
#[derive(Debug, Clone)]
pub struct PeriodMap {
    grid: Grid,
    adjoint: bool,
    /// `E_n − m_n I` (or its transpose), one entry when time-independent.
    ops: Vec<CsrMatrix>,
    /// `m_n`, one per stored level.
    rates: Vec<f64>,
    /// Factors of `I − Δt/2·ops[n]`, or empty when over budget.
    factors: Vec<BandLu>,
    perm: Vec<usize>,
}

impl PeriodMap {
    pub fn new(action: &LinearAction) -> Result<Self> {
        let grid = action.grid().clone();
        let levels = if action.is_time_independent() { 1 } else { grid.n_t() };
        let mut ops = Vec::with_capacity(levels);
        let mut rates = Vec::with_capacity(levels);
        for n in 0..levels {
            let c = action.zeroth_order(grid.time(n));
            let m = c.iter().sum::<f64>() / c.len() as f64;
            ops.push(action.matrix_at_level(n).shifted(-m, 1.0));
            rates.push(m);
        }
        let perm = interleaved_permutation(grid.n());
        let mut map = PeriodMap {
            grid,
            adjoint: action.is_adjoint(),
            ops,
            rates,
            factors: Vec::new(),
            perm,
        };
        let first = map.factor_level(0)?;
        let (kl, ku) = first.bandwidths();
        let bytes = BandLu::storage_bytes(map.grid.len(), kl, ku) * levels;
        if bytes <= FACTOR_CACHE_BYTES {
            let mut factors = vec![first];
            for n in 1..levels {
                factors.push(map.factor_level(n)?);
            }
            map.factors = factors;
        }
        Ok(map)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn is_adjoint(&self) -> bool {
        self.adjoint
    }

    /// `m_n`, the split-off uniform rate at level `n`.
    pub fn rate(&self, level: usize) -> f64 {
        self.rates[level % self.rates.len()]
    }

    /// `M(t_n)` by the trapezoid rule on the levels; `M(T) = Δt Σ m_n`.
    pub fn growth_integral(&self, level: usize) -> f64 {
        let dt = self.grid.dt();
        (0..level).map(|n| 0.5 * dt * (self.rate(n) + self.rate(n + 1))).sum()
    }

    fn op(&self, level: usize) -> &CsrMatrix {
        &self.ops[level % self.ops.len()]
    }

    fn factor_level(&self, level: usize) -> Result<BandLu> {
        let m = self.op(level).shifted(1.0, -0.5 * self.grid.dt());
        BandLu::factor(&m, &self.perm)
    }

    fn solve_level(&self, level: usize, b: &mut [f64]) -> Result<()> {
        let level = level % self.ops.len();
        if self.factors.is_empty() {
            self.factor_level(level)?.solve(b);
        } else {
            self.factors[level].solve(b);
        }
        Ok(())
    }

    /// `x + Δt/2·op(level)·x`
    fn explicit_half(&self, level: usize, x: &mut [f64]) {
        let ex = self.op(level).mul_vec(x);
        let c = 0.5 * self.grid.dt();
        for (xi, e) in x.iter_mut().zip(ex) {
            *xi += c * e;
        }
    }

    /// Apply the reduced map (`E − mI`) once. With `record`, also return the
    /// intermediate levels `0..n_t` (for the adjoint these are
    /// `w_0..w_{n_t-1}`, computed backward from the input at `t = T`).
    pub fn apply(&self, u0: &[f64], record: bool) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        self.propagate(u0, record, false)
    }

    /// One period with the damped first step.
    pub fn apply_damped(&self, u0: &[f64]) -> Result<Vec<f64>> {
        self.propagate(u0, false, true).map(|(u, _)| u)
    }

    fn propagate(&self, u0: &[f64], record: bool, damped: bool) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let n_t = self.grid.n_t();
        let mut u = u0.to_vec();
        let mut levels = Vec::new();
        if !self.adjoint {
            for n in 0..n_t {
                if record {
                    levels.push(u.clone());
                }
                if damped && n == 0 {
                    self.solve_level(1, &mut u)?;
                } else {
                    self.explicit_half(n, &mut u);
                }
                self.solve_level(n + 1, &mut u)?;
            }
        } else {
            if record {
                levels = vec![Vec::new(); n_t];
            }
            for n in (0..n_t).rev() {
                self.solve_level(n + 1, &mut u)?;
                if damped && n == 0 {
                    self.solve_level(1, &mut u)?;
                } else {
                    self.explicit_half(n, &mut u);
                }
                if record {
                    levels[n] = u.clone();
                }
            }
        }
        Ok((u, levels))
    }
}

/// `φ(T)` from `φ(0) = φ0` (direct map), or `φ(0)` from `φ(T) = φ0` (adjoint).
pub fn step_period(map: &PeriodMap, phi0: &GridFunction) -> Result<GridFunction> {
    let (mut u, _) = map.apply(&phi0.values, false)?;
    let g = map.growth_integral(map.grid().n_t()).exp();
    u.iter_mut().for_each(|v| *v *= g);
    GridFunction::new(map.grid(), u)
}
