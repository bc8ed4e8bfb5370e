use super::*;
use crate::speed::{spreading_speed, SpeedOptions};
use crate::testutil::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(n: usize, n_t: usize) -> Grid {
    Grid::new(&geo(1), &[n], n_t).unwrap()
}

fn bump() -> InitialData {
    InitialData::Bump {
        center: 0.0,
        half_width: 1.0,
        height: 1.0,
    }
}

#[test]
fn equilibria_stay_put() {
    let c = coeffs_1d("1 + 0.5*sin(2*pi*x)", "0.3*cos(2*pi*(x - t))", "1 + 0.5*cos(2*pi*t)");
    for v in [0.0, 1.0] {
        let run = solve_cauchy(&c, &InitialData::Constant(v), 8, 2.0, &grid(16, 16), &CauchyOptions::default()).unwrap();
        for (_, u) in &run.snapshots {
            assert!(u.iter().all(|x| (x - v).abs() < 1e-12));
        }
        assert!(run.valid);
    }
}

#[test]
fn solution_invades_the_origin() {
    let c = coeffs_1d("1", "0", "1");
    let run = solve_cauchy(&c, &bump(), 120, 20.0, &grid(16, 16), &CauchyOptions::default()).unwrap();
    let (t, u) = run.snapshots.last().unwrap();
    assert!((t - 20.0).abs() < 1e-9);
    let mid = u.len() / 2;
    assert!(u[mid] >= 0.99 && u[mid - 1] >= 0.99);
    assert!(run.valid);
}

#[test]
fn homogeneous_front_moves_at_two() {
    let c = coeffs_1d("1", "0", "1");
    let run = solve_cauchy(&c, &bump(), 180, 40.0, &grid(16, 16), &CauchyOptions::default()).unwrap();
    let f = front_speed(&run, &[1.0], 0.5, 0.5).unwrap();
    assert!((f.speed - 2.0).abs() <= 0.05 * 2.0, "{}", f.speed);
    let back = front_speed(&run, &[-1.0], 0.5, 0.5).unwrap();
    assert!((back.speed - f.speed).abs() < 1e-6);
}

#[test]
fn drift_front_and_periodic_front_match_the_eigenvalue_speed() {
    let c = coeffs_1d("1", "1", "1");
    let opts = CauchyOptions {
        left_cells: Some(60),
        ..CauchyOptions::default()
    };
    let run = solve_cauchy(&c, &bump(), 200, 40.0, &grid(16, 16), &opts).unwrap();
    let f = front_speed(&run, &[1.0], 0.5, 0.5).unwrap();
    assert!((f.speed - 3.0).abs() <= 0.05 * 3.0, "{}", f.speed);

    let c = coeffs_1d("1", "0", "1 + 0.5*cos(2*pi*x)");
    let c_star = spreading_speed(&c, &[1.0], &grid(256, 256), &SpeedOptions::default()).unwrap().c_star;
    let run = solve_cauchy(&c, &bump(), 180, 40.0, &grid(32, 32), &CauchyOptions::default()).unwrap();
    let f = front_speed(&run, &[1.0], 0.5, 0.5).unwrap();
    assert!((f.speed - c_star).abs() <= 0.05 * c_star, "{} vs {c_star}", f.speed);
}

#[test]
fn small_domains_are_flagged() {
    let c = coeffs_1d("1", "0", "1");
    let run = solve_cauchy(&c, &bump(), 8, 5.0, &grid(16, 16), &CauchyOptions::default()).unwrap();
    assert!(!run.valid && run.boundary_hit.is_some());
    assert!(matches!(front_speed(&run, &[1.0], 0.5, 0.5), Err(Error::FrontAtBoundary { .. })));
}

#[test]
fn missing_level_is_reported() {
    let c = coeffs_1d("1", "0", "1");
    let run = solve_cauchy(&c, &InitialData::Constant(0.0), 8, 1.0, &grid(16, 16), &CauchyOptions::default()).unwrap();
    assert!(matches!(front_speed(&run, &[1.0], 0.5, 0.5), Err(Error::LevelNotCrossed { .. })));
}

#[test]
fn rejects_bad_input() {
    let c = coeffs_1d("1", "0", "1");
    let g = grid(16, 16);
    let o = CauchyOptions::default();
    assert!(solve_cauchy(&c, &InitialData::Constant(-0.1), 8, 1.0, &g, &o).is_err());
    assert!(solve_cauchy(&c, &InitialData::Values(vec![0.0; 3]), 8, 1.0, &g, &o).is_err());
    let c2 = coeffs_2d(["1", "0", "1"], ["0", "0"], "1");
    assert!(solve_cauchy(&c2, &bump(), 8, 1.0, &Grid::new(&geo(2), &[16, 16], 16).unwrap(), &o).is_err());
}

/// Random nonnegative data with support in the middle of the line.
fn random_data(rng: &mut ChaCha8Rng, len: usize, max: f64) -> Vec<f64> {
    (0..len)
        .map(|i| {
            if i > len / 3 && i < 2 * len / 3 {
                rng.gen_range(0.0..max)
            } else {
                0.0
            }
        })
        .collect()
}

#[test]
fn comparison_and_invariance_on_random_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = grid(16, 32);
    let cells = 12;
    let len = cells * 16;
    for _ in 0..10 {
        let (amp, drift, var) = (rng.gen_range(0.0..0.5), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..0.8));
        let c = coeffs_1d(
            &format!("1 + {amp}*cos(2*pi*x)"),
            &format!("{drift} + 0.3*sin(2*pi*(x + t))"),
            &format!("1 + {var}*cos(2*pi*x)*cos(2*pi*t)"),
        );
        let lo = random_data(&mut rng, len, 1.0);
        let hi: Vec<f64> = lo.iter().map(|v| (v + rng.gen_range(0.0..0.3)).min(1.0)).collect();
        let o = CauchyOptions::default();
        let ra = solve_cauchy(&c, &InitialData::Values(lo), cells, 1.5, &g, &o).unwrap();
        let rb = solve_cauchy(&c, &InitialData::Values(hi), cells, 1.5, &g, &o).unwrap();
        for ((_, ua), (_, ub)) in ra.snapshots.iter().zip(&rb.snapshots) {
            for (a, b) in ua.iter().zip(ub) {
                assert!(*a <= b + 1e-8);
                assert!(*a >= -1e-8 && *b <= 1.0 + 1e-8);
            }
        }
    }
}
