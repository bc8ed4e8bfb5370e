use super::*;
use crate::eigen::principal_eigen_steady;
use crate::fields::{ellipticity_bounds, gradient_drift, CellGeometry};
use crate::testutil::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn grid(dim: usize, n: usize) -> Grid {
    Grid::new(&geo(dim), &vec![n; dim], 8).unwrap()
}

fn iso(g: &CellGeometry, a: &str) -> PeriodicField {
    PeriodicField::isotropic(g, sf(a)).unwrap()
}

/// `1/⟨1/a⟩` by a fine trapezoid rule, independent of the solver.
fn harmonic_mean(a: impl Fn(f64) -> f64, points: usize) -> f64 {
    let s: f64 = (0..points).map(|i| 1.0 / a(i as f64 / points as f64)).sum();
    points as f64 / s
}

#[test]
fn identity_has_unit_diffusivity() {
    let g = grid(2, 16);
    let r = effective_diffusivity(&iso(g.geometry(), "1"), &[1.0, 1.0], &g).unwrap();
    assert!((r.value - 1.0).abs() < 1e-13);
    assert!(r.corrector.values.iter().all(|v| v.abs() < 1e-12));
    assert!((r.direction[0] - 0.5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn one_dimensional_cell_problem_is_the_harmonic_mean() {
    let oracle = harmonic_mean(|x| 2.0 + (2.0 * PI * x).cos(), 1 << 14);
    assert!((oracle - 3.0f64.sqrt()).abs() < 1e-12);
    let g = grid(1, 512);
    let r = effective_diffusivity(&iso(g.geometry(), "2 + cos(2*pi*x)"), &[1.0], &g).unwrap();
    assert!((r.value - 1.732_050_8).abs() < 1e-4, "{}", r.value);
    assert!(r.corrector.values.iter().sum::<f64>().abs() < 1e-10);
    assert!(r.value <= 2.0);
}

#[test]
fn laminate_gives_harmonic_and_arithmetic_means() {
    let g = grid(2, 128);
    let a = iso(g.geometry(), "2 + cos(2*pi*x)");
    let across = effective_diffusivity(&a, &[1.0, 0.0], &g).unwrap().value;
    let along = effective_diffusivity(&a, &[0.0, 1.0], &g).unwrap().value;
    assert!((across - 3.0f64.sqrt()).abs() < 1e-3, "{across}");
    assert!((along - 2.0).abs() < 1e-12, "{along}");
}

#[test]
fn constant_anisotropic_matrix_is_its_own_diffusivity() {
    let g = grid(2, 16);
    let a = PeriodicField::matrix(g.geometry(), vec![sf("2"), sf("0.5"), sf("1")]).unwrap();
    let r = effective_diffusivity(&a, &[1.0, 1.0], &g).unwrap();
    assert!((r.value - 0.5 * (2.0 + 1.0 + 1.0)).abs() < 1e-12);
}

#[test]
fn time_dependent_matrix_is_rejected() {
    let g = grid(1, 16);
    let a = iso(g.geometry(), "2 + sin(2*pi*t)");
    assert!(matches!(effective_diffusivity(&a, &[1.0], &g), Err(Error::TimeDependent(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn diffusivity_is_homogeneous_and_within_ellipticity(
        c in 0.2f64..5.0,
        amp in 0.0f64..0.9,
        skew in -0.3f64..0.3,
        angle in 0.0f64..(2.0 * PI),
    ) {
        let g = grid(2, 24);
        let a = PeriodicField::matrix(g.geometry(), vec![
            sf(&format!("1 + {amp}*cos(2*pi*x)*sin(2*pi*y)")),
            sf(&format!("{skew}*cos(2*pi*(x+y))")),
            sf(&format!("1 + {amp}*sin(2*pi*x)")),
        ]).unwrap();
        let e = [angle.cos(), angle.sin()];
        let d = effective_diffusivity(&a, &e, &g).unwrap().value;
        let dc = effective_diffusivity(&a.scaled(c), &e, &g).unwrap().value;
        prop_assert!((dc - c * d).abs() <= 1e-10 * c * d);
        let (gamma, big) = ellipticity_bounds(&a, 64).unwrap();
        prop_assert!(gamma <= d && d <= big, "{gamma} {d} {big}");
        // no worse than the zero corrector
        let plain: f64 = (0..g.len()).map(|i| {
            let x = g.point(i);
            e[0] * e[0] * a.entry(0, 0).eval(0.0, &x) + 2.0 * e[0] * e[1] * a.entry(0, 1).eval(0.0, &x)
                + e[1] * e[1] * a.entry(1, 1).eval(0.0, &x)
        }).sum::<f64>() / g.len() as f64;
        prop_assert!(d <= plain + 1e-12);
    }
}

#[test]
fn k0_of_constant_potential() {
    let g = grid(1, 64);
    let a = iso(g.geometry(), "1");
    assert!((k0_rayleigh(&a, &scalar(g.geometry(), "0.7"), &g).unwrap() + 0.7).abs() < 1e-12);
    assert!((k0_rayleigh(&a, &scalar(g.geometry(), "-1"), &g).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn k0_matches_the_eigensolver() {
    for (dim, n) in [(1, 256), (2, 32)] {
        let g = grid(dim, n);
        let geom = g.geometry().clone();
        let (a_txt, v_txt) = if dim == 1 {
            ("2 + cos(2*pi*x)", "1 + 0.5*cos(2*pi*x)")
        } else {
            ("1 + 0.3*sin(2*pi*x)*cos(2*pi*y)", "1 + 0.5*cos(2*pi*x) + 0.2*sin(2*pi*y)")
        };
        let a = iso(&geom, a_txt);
        let v = scalar(&geom, v_txt);
        let (k, phi) = rayleigh_ground_state(&a, &v, &g).unwrap();
        let c = CoefficientSet::new(a.clone(), PeriodicField::zero_vector(&geom), v.clone()).unwrap();
        let s = principal_eigen_steady(&c, &vec![0.0; dim], &g).unwrap();
        assert!((k - s.k).abs() < 1e-8, "{k} vs {}", s.k);
        assert!(phi.min() > 0.0);
        let sq: Vec<f64> = phi.values.iter().map(|v| v * v).collect();
        assert!((g.integrate(&sq) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn ground_state_stops_at_round_off() {
    // once the residual is ~1e-11 the quotient alternates in its last bits
    let g = grid(1, 256);
    let geom = g.geometry().clone();
    let a = iso(&geom, "1 + 0.18818225248662554*cos(2*pi*x + 3.0584347840261197)");
    let q = scalar(&geom, "0.2817841917679752*cos(2*pi*x) + 0.17845603965708234*sin(4*pi*x)");
    let mu = scalar(&geom, "1.2789391268084729 + 0.4477809724360875*sin(2*pi*x)");
    let c = CoefficientSet::new(a, gradient_drift(&q).unwrap().drift, mu).unwrap();
    let lam = [-0.21370931942370652];
    let bound = compjlambda_lower_bound(&c, &lam, &g).unwrap();
    let k = principal_eigen_steady(&c, &lam, &g).unwrap().k;
    assert!(k >= bound - 1e-8, "{k} < {bound}");
}

#[test]
fn rayleigh_bound_is_exact_for_constants() {
    let g = grid(1, 64);
    let geom = g.geometry().clone();
    let alpha = GridFunction::constant(&g, 1.0 / geom.volume().sqrt());
    for lam in [0.0, 0.5, 2.0] {
        let b = rayleigh_upper_bound(&iso(&geom, "1"), &scalar(&geom, "1.3"), 1.0, lam, &[1.0], &alpha, &g).unwrap();
        assert!((b + 1.3 + lam * lam).abs() < 1e-12, "{b}");
    }
}

#[test]
fn rayleigh_bound_dominates_the_eigenvalue() {
    let g = grid(1, 256);
    let geom = g.geometry().clone();
    let a = iso(&geom, "2 + cos(2*pi*x)");
    let mu = scalar(&geom, "1 + 0.5*cos(2*pi*x)");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for kappa in [0.5, 1.0, 2.0] {
        for lam in [0.1, 0.7, 1.5] {
            let c = CoefficientSet::new(a.scaled(kappa), PeriodicField::zero_vector(&geom), mu.clone()).unwrap();
            let k = principal_eigen_steady(&c, &[lam], &g).unwrap().k;
            let (b1, b2, ph) = (rng.gen_range(-0.6..0.6), rng.gen_range(-0.4..0.4), rng.gen_range(0.0..1.0));
            let alpha = GridFunction::from_fn(&g, |x| {
                1.0 + b1 * (2.0 * PI * (x[0] + ph)).cos() + b2 * (4.0 * PI * x[0]).sin()
            });
            let constant = GridFunction::constant(&g, 1.0);
            for al in [&alpha, &constant] {
                let bound = rayleigh_upper_bound(&a, &mu, kappa, lam, &[1.0], al, &g).unwrap();
                assert!(bound >= k, "κ={kappa} λ={lam}: {bound} < {k}");
            }
        }
    }
    // on the cosine growth rate with A = I the constant candidate gives −1 − λ²
    let lam = 0.8;
    let c = CoefficientSet::new(iso(&geom, "1"), PeriodicField::zero_vector(&geom), mu.clone()).unwrap();
    let k = principal_eigen_steady(&c, &[lam], &g).unwrap().k;
    let b = rayleigh_upper_bound(&iso(&geom, "1"), &mu, 1.0, lam, &[1.0], &GridFunction::constant(&g, 1.0), &g).unwrap();
    assert!((b + 1.0 + lam * lam).abs() < 1e-12 && b >= k);
}

#[test]
fn ground_state_candidate_is_nearly_optimal() {
    let g = grid(1, 256);
    let geom = g.geometry().clone();
    let a = iso(&geom, "1");
    let mu = scalar(&geom, "1 + 0.5*cos(2*pi*x)");
    let (_, phi) = rayleigh_ground_state(&a, &mu, &g).unwrap();
    let lam = 0.1;
    let c = CoefficientSet::new(a.clone(), PeriodicField::zero_vector(&geom), mu.clone()).unwrap();
    let k = principal_eigen_steady(&c, &[lam], &g).unwrap().k;
    let b = rayleigh_upper_bound(&a, &mu, 1.0, lam, &[1.0], &phi, &g).unwrap();
    assert!(b >= k && b - k <= 1e-3, "{b} {k}");
}

#[test]
fn rayleigh_rejects_nonpositive_candidates() {
    let g = grid(1, 32);
    let geom = g.geometry().clone();
    let alpha = GridFunction::from_fn(&g, |x| (2.0 * PI * x[0]).sin());
    let r = rayleigh_upper_bound(&iso(&geom, "1"), &scalar(&geom, "1"), 1.0, 1.0, &[1.0], &alpha, &g);
    assert!(matches!(r, Err(Error::NonPositive { .. })));
}

#[test]
fn eigenvalue_is_concave_in_the_diffusion_scale() {
    let g = grid(1, 256);
    let geom = g.geometry().clone();
    let c = CoefficientSet::new(
        iso(&geom, "2 + cos(2*pi*x)"),
        PeriodicField::zero_vector(&geom),
        scalar(&geom, "1 + 0.5*cos(2*pi*x)"),
    )
    .unwrap();
    for lam in [0.5, 1.0] {
        let ks: Vec<f64> = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5]
            .iter()
            .map(|&kap| principal_eigen_steady(&c.with_diffusion_scaled(kap).unwrap(), &[lam], &g).unwrap().k)
            .collect();
        for w in ks.windows(3) {
            assert!(w[1] >= 0.5 * (w[0] + w[2]) - 1e-10, "{w:?}");
        }
    }
}

#[test]
fn lower_bound_is_exact_for_constants() {
    let g = grid(1, 32);
    let c = coeffs_1d("1.5", "0.4", "1.1");
    for lam in [0.0, 0.6, -1.2] {
        let b = compjlambda_lower_bound(&c, &[lam], &g).unwrap();
        let k = principal_eigen_steady(&c, &[lam], &g).unwrap().k;
        let exact = -(1.5 * lam * lam - 0.4 * lam + 1.1);
        assert!((b - exact).abs() < 1e-12 && (k - exact).abs() < 1e-12);
    }
}

#[test]
fn lower_bound_without_drift() {
    let g = grid(1, 256);
    let c = coeffs_1d("1", "0", "1 + 0.5*cos(2*pi*x)");
    let b = compjlambda_lower_bound(&c, &[1.0], &g).unwrap();
    let k0 = principal_eigen_steady(&c, &[0.0], &g).unwrap().k;
    let k1 = principal_eigen_steady(&c, &[1.0], &g).unwrap().k;
    assert!((b - (k0 - 1.0)).abs() < 1e-10);
    assert!(k1 >= b);
}

#[test]
fn lower_bound_with_gradient_drift() {
    let g = grid(1, 256);
    let c = coeffs_1d("1", "-0.6*pi*sin(2*pi*x)", "1");
    let b = compjlambda_lower_bound(&c, &[0.5], &g).unwrap();
    let k = principal_eigen_steady(&c, &[0.5], &g).unwrap().k;
    assert!(k - b >= 0.0, "{k} {b}");
}

#[test]
fn lower_bound_uses_tabulated_divergence() {
    let g = grid(1, 256);
    let geom = g.geometry().clone();
    let q: Vec<f64> = (0..256).map(|i| 0.5 * (2.0 * PI * i as f64 / 256.0).cos()).collect();
    let table = ScalarFn::table(Table::new(&geom, &[256], 1, q).unwrap());
    let tab = CoefficientSet::new(
        iso(&geom, "1"),
        PeriodicField::vector(&geom, vec![table]).unwrap(),
        scalar(&geom, "1"),
    )
    .unwrap();
    let sym = coeffs_1d("1", "0.5*cos(2*pi*x)", "1");
    let (bt, bs) = (
        compjlambda_lower_bound(&tab, &[0.3], &g).unwrap(),
        compjlambda_lower_bound(&sym, &[0.3], &g).unwrap(),
    );
    assert!((bt - bs).abs() < 1e-4, "{bt} {bs}");
}

#[test]
fn lower_bound_holds_on_random_two_dimensional_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = grid(2, 32);
    for _ in 0..4 {
        let (a1, a2, qa, m1) = (
            rng.gen_range(0.0..0.5),
            rng.gen_range(-0.2..0.2),
            rng.gen_range(0.0..0.4),
            rng.gen_range(0.0..0.5),
        );
        let c = coeffs_2d(
            [
                &format!("1 + {a1}*cos(2*pi*x)"),
                &format!("{a2}*sin(2*pi*(x+y))"),
                &format!("1 + {a1}*sin(2*pi*y)"),
            ],
            [&format!("-2*pi*{qa}*sin(2*pi*x)"), &format!("-2*pi*{qa}*cos(2*pi*y)")],
            &format!("1 + {m1}*cos(2*pi*x)*cos(2*pi*y)"),
        );
        let lam = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let b = compjlambda_lower_bound(&c, &lam, &g).unwrap();
        let k = principal_eigen_steady(&c, &lam, &g).unwrap().k;
        assert!(k - b >= -1e-8, "{k} {b}");
    }
}
