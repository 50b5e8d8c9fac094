mod common;

use kyleback::equilibrium::LinearEquilibrium;
use kyleback::numerics::normal_cdf;
use kyleback::pde::{build_surface, check_system_residual_within, solve_r, time_grid, Field, ModelParams};
use kyleback::potential::TailMode;
use kyleback::{ConvexPotential, XiGrid};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn graded_time_grid() {
    let t: Vec<f64> = time_grid(2.0, 16).unwrap();
    assert_eq!(t.len(), 17);
    assert_eq!(t[0], 0.0);
    assert_eq!(t[16], 2.0);
    assert!((t[16] - t[15] - 2.0 / 256.0).abs() < 1e-14);
    assert!(t.windows(2).all(|w| w[1] > w[0]));
    let fine: Vec<f64> = time_grid(2.0, 32).unwrap();
    for (k, v) in t.iter().enumerate() {
        assert!((fine[2 * k] - v).abs() < 1e-14);
    }
    assert!(time_grid(1.0f64, 1).is_err());
}

#[test]
fn neutral_slope_follows_heat_kernel() {
    // With γ = 0 the slope solves the backward heat equation, so a Gaussian bump
    // spreads with variance s² + σ²(T−t).
    let (amp, s) = (1.0, 0.5);
    let params = ModelParams::new(1.0, 0.5, 0.0, 4.0).unwrap();
    let grid = XiGrid::default_for(0.5, 1.0);
    let g = |x: f64| amp * s * (2.0 * std::f64::consts::PI).sqrt() * (normal_cdf(x / s) - 0.5);
    let pot = ConvexPotential::from_fn(grid.clone(), g, params.l_cap, TailMode::Constant).unwrap();
    let surface = build_surface(&pot, &params, 512, None).unwrap();
    for (k, &t) in surface.t_grid.iter().enumerate().step_by(37) {
        let v = s * s + 0.25 * (1.0 - t);
        for i in (0..grid.len()).step_by(11) {
            let x = grid.node(i);
            if x.abs() > 2.0 {
                continue;
            }
            let r = amp * s / v.sqrt() * (-x * x / (2.0 * v)).exp();
            let p = amp * s * (2.0 * std::f64::consts::PI).sqrt() * (normal_cdf(x / v.sqrt()) - 0.5);
            assert!((surface.r[[k, i]] - r).abs() < 1e-4, "R at t={t} x={x}");
            assert!((surface.p[[k, i]] - p).abs() < 1e-4, "P at t={t} x={x}");
            assert!((surface.chi[[k, i]] - x).abs() < 1e-14);
        }
    }
}

#[test]
fn linear_map_keeps_closed_form() {
    let params = ModelParams::new(1.0, 0.5, 0.1, 4.0).unwrap();
    let eq = LinearEquilibrium::new(params, 1.0, 1.0).unwrap();
    let grid = XiGrid::default_for(0.5, 1.0);
    let pot = ConvexPotential::from_fn(grid.clone(), |x| eq.lambda * x + eq.m, 4.0, TailMode::Linear).unwrap();
    let surface = build_surface(&pot, &params, 256, None).unwrap();
    for (k, &t) in surface.t_grid.iter().enumerate().step_by(17) {
        for i in (0..grid.len()).step_by(13) {
            let x = grid.node(i);
            assert!((surface.r[[k, i]] - eq.lambda).abs() < 1e-9);
            assert!((surface.p[[k, i]] - eq.price(t, x)).abs() < 1e-8);
            assert!((surface.chi[[k, i]] - eq.chi(t, x)).abs() < 1e-8);
            assert!((surface.gamma[[k, i]] - eq.gamma(t, x)).abs() < 1e-8, "t={t} x={x}");
        }
    }
    let res = check_system_residual_within(&surface, 2.0);
    assert!(res.gamma < 1e-6 && res.chi < 1e-6 && res.identity < 1e-6 && res.pricing < 1e-6, "{res:?}");
}

#[test]
fn gaussian_surface_near_closed_form() {
    let s = common::gaussian();
    let eq = LinearEquilibrium::new(s.params, 1.0, 1.0).unwrap();
    let mut rng = common::rng(6);
    for _ in 0..50 {
        let t = rng.random_range(0.0..1.0);
        let x = rng.random_range(-1.0..1.0);
        assert!((s.surface.p_at(t, x) - eq.price(t, x)).abs() < 1e-4);
        assert!((s.surface.chi_at(t, x) - eq.chi(t, x)).abs() < 1e-4);
        assert!((s.surface.gamma_at(t, x) - eq.gamma(t, x)).abs() < 1e-4);
    }
    let res = check_system_residual_within(&s.surface, 2.0);
    assert!(res.gamma < 1e-3 && res.chi < 1e-3 && res.identity < 1e-3 && res.pricing < 1e-3, "{res:?}");
}

#[test]
fn uniform_surface_invariants() {
    let s = common::uniform();
    s.surface.check_invariants().unwrap();
    let l = s.params.l_cap;
    assert!(s.surface.r.iter().all(|&r| (0.0..=l).contains(&r)));
    for &t in &[0.0, 0.3, 0.9, 1.0] {
        for i in 0..40 {
            let x = -3.0 + 0.15 * i as f64;
            let d = s.surface.chi_xi_at(t, x);
            assert!(d <= 1.0 && d >= 1.0 - s.params.budget());
            let (back, clamped) = s.surface.chi_inverse(t, s.surface.chi_at(t, x));
            assert!(!clamped);
            assert!((back - x).abs() < 1e-9);
        }
    }
}

#[test]
fn field_csv_export() {
    let s = common::gaussian();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gamma.csv");
    s.surface.write_field_csv(Field::Gamma, &path, 64, 128).unwrap();
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    assert_eq!(rdr.headers().unwrap(), vec!["t", "xi", "Gamma"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let per_slice = s.surface.xi_grid.len().div_ceil(128);
    assert_eq!(rows.len(), 9 * per_slice);
    let last = &rows[rows.len() - 1];
    assert_eq!(last[0].parse::<f64>().unwrap(), 1.0);
    let x: f64 = last[1].parse().unwrap();
    let v: f64 = last[2].parse().unwrap();
    assert!((v - s.surface.gamma_at(1.0, x)).abs() < 1e-12 * (1.0 + v.abs()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn slope_stays_within_terminal_range(
        amps in prop::collection::vec(0.05f64..0.4, 3),
        centers in prop::collection::vec(-2.0f64..2.0, 3),
        widths in prop::collection::vec(0.35f64..1.0, 3),
        gamma in 0.0f64..0.3,
    ) {
        let l_cap = 4.0;
        let params = ModelParams::new(1.0, 0.5, gamma, l_cap).unwrap();
        let grid = XiGrid::new(4.0, 257).unwrap();
        let g = |x: f64| (0..3).map(|j| amps[j] * ((x - centers[j]) / widths[j]).tanh()).sum::<f64>();
        let pot = ConvexPotential::from_fn(grid, g, l_cap, TailMode::Constant).unwrap();
        let slopes = pot.cell_slopes();
        let lo = slopes.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = slopes.iter().copied().fold(0.0, f64::max);
        let sol = solve_r(&pot, &params, 64).unwrap();
        for &r in sol.cells.iter() {
            prop_assert!(r >= lo - 1e-10 * hi && r <= hi * (1.0 + 1e-10));
        }
        let surface = build_surface(&pot, &params, 64, None).unwrap();
        prop_assert!(surface.check_invariants().is_ok());
    }
}
