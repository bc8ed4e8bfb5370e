//! One-dimensional bracketing and golden-section minimization.

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Every evaluated `(x, f(x))`, in evaluation order.
pub type Samples = Vec<(f64, f64)>;

/// Find `(a, b)` with an interior sample below both ends by doubling (or
/// halving) from `start`, staying inside `[lo, hi]`.
pub fn bracket_by_doubling<F>(f: &mut F, start: f64, lo: f64, hi: f64, samples: &mut Samples) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut eval = |x: f64, samples: &mut Samples| -> Result<f64> {
        let v = f(x)?;
        samples.push((x, v));
        Ok(v)
    };
    let not_found = Error::BracketNotFound { lo, hi };
    let (mut x0, mut x1) = (start, 2.0 * start);
    if x1 > hi {
        return Err(not_found);
    }
    let (mut f0, mut f1) = (eval(x0, samples)?, eval(x1, samples)?);
    if f1 < f0 {
        loop {
            let x2 = 2.0 * x1;
            if x2 > hi {
                return Err(not_found);
            }
            let f2 = eval(x2, samples)?;
            if f2 >= f1 {
                return Ok((x0, x2));
            }
            (x0, x1, f1) = (x1, x2, f2);
        }
    }
    loop {
        let xm = 0.5 * x0;
        if xm < lo {
            return Err(not_found);
        }
        let fm = eval(xm, samples)?;
        if fm > f0 {
            return Ok((xm, x1));
        }
        (x1, x0, f0) = (x0, xm, fm);
    }
}

/// Golden-section search on `[a, b]` until the interval is shorter than
/// `tol·(1 + |x|)`. Returns the best sample seen.
pub fn golden_section<F>(f: &mut F, mut a: f64, mut b: f64, tol: f64, samples: &mut Samples) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    samples.push((c, fc));
    samples.push((d, fd));
    while (b - a) > tol * (1.0 + 0.5 * (a + b).abs()) {
        if fc < fd {
            b = d;
            (d, fd) = (c, fc);
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
            samples.push((c, fc));
        } else {
            a = c;
            (c, fc) = (d, fd);
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
            samples.push((d, fd));
        }
    }
    let best = samples
        .iter()
        .copied()
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .expect("golden section evaluates at least twice");
    Ok(best)
}

/// Checks that the sampled values, ordered by abscissa, decrease and then
/// increase. Changes below `noise·max(1,|f|)` are ignored.
pub fn check_unimodal(samples: &[(f64, f64)], noise: f64) -> Result<()> {
    let mut pts = samples.to_vec();
    pts.sort_by(|p, q| p.0.total_cmp(&q.0));
    pts.dedup_by(|p, q| p.0 == q.0);
    let mut rising = false;
    for w in pts.windows(2) {
        let df = w[1].1 - w[0].1;
        if df.abs() <= noise * 1.0f64.max(w[0].1.abs()) {
            continue;
        }
        if df > 0.0 {
            rising = true;
        } else if rising {
            return Err(Error::NotUnimodal(format!(
                "objective falls again between s = {:e} and s = {:e}",
                w[0].0, w[1].0
            )));
        }
    }
    Ok(())
}
