//! Symmetric (self-adjoint) characterizations: the periodic cell problem for
//! the effective diffusivity, Rayleigh-quotient eigenvalues, and the lower
//! bound obtained by eliminating the drift.

use crate::error::{Error, Result};
use crate::fields::{CoefficientSet, PeriodicField, ScalarFn, Table};
use crate::operator::banded::interleaved_permutation;
use crate::operator::{assemble_action, BandLu, CsrMatrix, Grid, GridFunction};

/// Smallest admissible value of a normalized Rayleigh test function.
pub const MIN_TEST_FUNCTION: f64 = 1e-8;

const RAYLEIGH_TOLERANCE: f64 = 1e-13;
const MAX_ITERATIONS: usize = 500;

/// Solution of the cell problem in direction `e`.
#[derive(Debug, Clone)]
pub struct CellProblemResult {
    /// Zero-mean periodic corrector `χ`.
    pub corrector: GridFunction,
    /// `D_e(A) = (1/|C|)∫_C (e+∇χ)·A(e+∇χ)`.
    pub value: f64,
    pub direction: Vec<f64>,
}

fn require_time_independent(f: &PeriodicField, what: &str) -> Result<()> {
    if f.is_time_independent() {
        return Ok(());
    }
    f.verify_time_independent()
        .map_err(|_| Error::TimeDependent(what.to_string()))
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

/// `∇·(A∇·)` on the grid, with the same stencil as the eigen operators.
fn diffusion_matrix(a: &PeriodicField, grid: &Grid) -> Result<CsrMatrix> {
    let g = a.geometry();
    let coeffs = CoefficientSet::new(
        a.clone(),
        PeriodicField::zero_vector(g),
        PeriodicField::constant_scalar(g, 0.0),
    )?;
    let lambda = vec![0.0; g.dim()];
    Ok(assemble_action(&coeffs, &lambda, grid, false)?.matrix(0.0))
}

/// Periodic minimal-image offset from node `i` to node `j`.
fn offset(grid: &Grid, i: usize, j: usize) -> [f64; 2] {
    let (ci, cj) = (grid.coords(i), grid.coords(j));
    let mut d = [0.0; 2];
    for (axis, slot) in d.iter_mut().enumerate().take(grid.dim()) {
        let n = grid.n()[axis] as isize;
        let mut s = cj[axis] as isize - ci[axis] as isize;
        if s > n / 2 {
            s -= n;
        } else if s < -n / 2 {
            s += n;
        }
        *slot = s as f64 * grid.h(axis);
    }
    d
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Cell problem `∇·(A(e+∇χ)) = 0` for time-independent `A`.
///
/// The corrector is fixed by pinning one node and then shifted to zero
/// mean. The value uses the identity `D = ⟨eAe⟩ − ⟨b, χ⟩` at the minimizer,
/// where `b = ∇·(Ae)` is the discrete operator applied to `x ↦ e·x`.
pub fn effective_diffusivity(a: &PeriodicField, e: &[f64], grid: &Grid) -> Result<CellProblemResult> {
    require_time_independent(a, "effective diffusivity needs a time-independent matrix")?;
    let dim = grid.dim();
    let e = unit(e, dim)?;
    let k = diffusion_matrix(a, grid)?;
    let len = grid.len();

    let b: Vec<f64> = (0..len)
        .map(|i| {
            k.row(i)
                .filter(|&(j, _)| j != i)
                .map(|(j, v)| {
                    let d = offset(grid, i, j);
                    v * (0..dim).map(|ax| e[ax] * d[ax]).sum::<f64>()
                })
                .sum()
        })
        .collect();

    // K χ = −b with χ_0 = 0
    let mut triplets = Vec::with_capacity(k.nnz());
    for i in 0..len {
        for (j, v) in k.row(i) {
            if i != 0 && j != 0 {
                triplets.push((i, j, v));
            }
        }
    }
    triplets.push((0, 0, 1.0));
    let pinned = CsrMatrix::from_triplets(len, len, triplets);
    let lu = BandLu::factor(&pinned, &interleaved_permutation(grid.n()))?;
    let mut chi: Vec<f64> = b.iter().map(|v| -v).collect();
    chi[0] = 0.0;
    lu.solve(&mut chi);
    let m = mean(&chi);
    chi.iter_mut().for_each(|v| *v -= m);

    let eae: Vec<f64> = (0..len)
        .map(|idx| {
            let x = grid.point(idx);
            let mut s = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    s += e[i] * e[j] * a.entry(i, j).eval(0.0, &x[..dim]);
                }
            }
            s
        })
        .collect();
    let coupling = b.iter().zip(&chi).map(|(u, v)| u * v).sum::<f64>() / len as f64;
    Ok(CellProblemResult {
        corrector: GridFunction::new(grid, chi)?,
        value: mean(&eae) - coupling,
        direction: e,
    })
}

/// Smallest eigenvalue and unit-`L²` positive eigenvector of the symmetric
/// matrix `−∇·(A∇·) − V` by shifted inverse iteration.
pub fn rayleigh_ground_state(a: &PeriodicField, v: &PeriodicField, grid: &Grid) -> Result<(f64, GridFunction)> {
    require_time_independent(a, "Rayleigh quotient needs a time-independent matrix")?;
    require_time_independent(v, "Rayleigh quotient needs a time-independent potential")?;
    let len = grid.len();
    let pot = grid.sample_field(v, 0.0);
    let k = diffusion_matrix(a, grid)?;
    let mut trip = Vec::with_capacity(k.nnz());
    for i in 0..len {
        for (j, val) in k.row(i) {
            trip.push((i, j, -val));
        }
        trip.push((i, i, -pot[i]));
    }
    let m = CsrMatrix::from_triplets(len, len, trip);
    let perm = interleaved_permutation(grid.n());

    // Gershgorin lower bound
    let mut sigma = (0..len)
        .map(|i| {
            m.row(i)
                .map(|(j, val)| if j == i { val } else { -val.abs() })
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    sigma -= 1e-3 * (1.0 + sigma.abs());
    let factor = |s: f64| BandLu::factor(&m.shifted(-s, 1.0), &perm);
    let mut lu = factor(sigma)?;

    let mut x = vec![1.0 / (len as f64).sqrt(); len];
    let mut rho_prev = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        lu.solve(&mut x);
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let sign = if x.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        x.iter_mut().for_each(|v| *v *= sign / norm);
        let mx = m.mul_vec(&x);
        let rho: f64 = x.iter().zip(&mx).map(|(a, b)| a * b).sum();
        let r = mx
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - rho * b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = 1.0f64.max(rho.abs());
        // near the shift the quotient jitters at round-off; for a symmetric
        // matrix its error is below r²/gap, so a tiny residual also stops
        let settled = (rho - rho_prev).abs() <= RAYLEIGH_TOLERANCE * scale;
        if r <= 1e-6 * scale && (settled || r <= 1e-8 * scale) {
            let chunk = (grid.cell_weight()).sqrt();
            let values = x.iter().map(|v| v / chunk).collect();
            return Ok((rho, GridFunction::new(grid, values)?));
        }
        rho_prev = rho;
        let target = rho - 2.0 * r - 1e-9 * scale;
        if target - sigma >= 0.5 * (rho - sigma) {
            sigma = target;
            lu = factor(sigma)?;
        }
    }
    Err(Error::NoConvergence {
        what: "Rayleigh inverse iteration",
        iterations: MAX_ITERATIONS,
        residual: rho_prev,
    })
}

/// `k_0(A, 0, V) = min ∫∇φ·A∇φ − ∫Vφ²` over `∫φ² = 1`.
pub fn k0_rayleigh(a: &PeriodicField, v: &PeriodicField, grid: &Grid) -> Result<f64> {
    rayleigh_ground_state(a, v, grid).map(|(k, _)| k)
}

/// The Rayleigh expression
/// `∫κ∇α·A∇α − ∫μα² − λ²κ|C|·D_e(α²A)` for one positive test function,
/// an upper bound for `k_{λe}(κA, 0, μ)`. `α` is renormalized to `∫α² = 1`.
#[allow(clippy::too_many_arguments)]
pub fn rayleigh_upper_bound(
    a: &PeriodicField,
    mu: &PeriodicField,
    kappa: f64,
    lambda: f64,
    e: &[f64],
    alpha: &GridFunction,
    grid: &Grid,
) -> Result<f64> {
    require_time_independent(mu, "Rayleigh bound needs a time-independent growth rate")?;
    let sq: f64 = grid.integrate(&alpha.values.iter().map(|v| v * v).collect::<Vec<_>>());
    let alpha: Vec<f64> = alpha.values.iter().map(|v| v / sq.sqrt()).collect();
    let min = alpha.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min >= MIN_TEST_FUNCTION) {
        return Err(Error::NonPositive { min });
    }
    let k = diffusion_matrix(a, grid)?;
    let ka = k.mul_vec(&alpha);
    let w = grid.cell_weight();
    let energy = -kappa * w * alpha.iter().zip(&ka).map(|(x, y)| x * y).sum::<f64>();
    let m = grid.sample_field(mu, 0.0);
    let growth = w * alpha.iter().zip(&m).map(|(x, y)| x * x * y).sum::<f64>();

    let squares = Table::new(grid.geometry(), grid.n(), 1, alpha.iter().map(|v| v * v).collect())?;
    let weighted = a.times_scalar(&ScalarFn::table(squares))?;
    let d = effective_diffusivity(&weighted, e, grid)?.value;
    Ok(energy - growth - lambda * lambda * kappa * grid.geometry().volume() * d)
}

/// `∇·q` as a field: symbolic when every component differentiates,
/// otherwise second-order centered differences tabulated on the grid.
fn drift_divergence(q: &PeriodicField, grid: &Grid) -> Result<ScalarFn> {
    let dim = grid.dim();
    let parts: Option<Vec<ScalarFn>> = (0..dim).map(|i| q.component(i).partial(i)).collect();
    if let Some(parts) = parts {
        return Ok(ScalarFn::linear(parts.into_iter().map(|p| (1.0, p)).collect()));
    }
    let mut div = vec![0.0; grid.len()];
    for i in 0..dim {
        let qi = grid.sample(q.component(i), 0.0);
        let inv = 1.0 / (2.0 * grid.h(i));
        for (idx, d) in div.iter_mut().enumerate() {
            *d += (qi[grid.shift(idx, i, 1)] - qi[grid.shift(idx, i, -1)]) * inv;
        }
    }
    Ok(ScalarFn::table(Table::new(grid.geometry(), grid.n(), 1, div)?))
}

/// The drift-free lower bound
/// `k_λ(A,q,μ) ≥ k_0(A, 0, ∇·q/2 + λAλ − λ·q + μ)` for time-independent
/// coefficients.
pub fn compjlambda_lower_bound(coeffs: &CoefficientSet, lambda: &[f64], grid: &Grid) -> Result<f64> {
    let dim = coeffs.dim();
    if lambda.len() != dim {
        return Err(Error::Dimension(format!("λ has {} components, cell has {dim}", lambda.len())));
    }
    for (f, what) in [
        (&coeffs.diffusion, "diffusion"),
        (&coeffs.drift, "drift"),
        (&coeffs.growth, "growth"),
    ] {
        require_time_independent(f, what)?;
    }
    let mut terms = vec![
        (0.5, drift_divergence(&coeffs.drift, grid)?),
        (1.0, coeffs.growth.component(0).clone()),
    ];
    for i in 0..dim {
        terms.push((-lambda[i], coeffs.drift.component(i).clone()));
        for j in 0..dim {
            terms.push((lambda[i] * lambda[j], coeffs.diffusion.entry(i, j).clone()));
        }
    }
    let potential = PeriodicField::scalar(coeffs.geometry(), ScalarFn::linear(terms))?;
    k0_rayleigh(&coeffs.diffusion, &potential, grid)
}

#[cfg(test)]
mod tests;
