mod common;

use kyleback::beliefs::BeliefDistribution;
use kyleback::fixed_point::{
    eval_g_and_derivatives, picard_solve, solve_representation, terminal_density, PicardConfig, TerminalDensity,
};
use kyleback::numerics::{normal_cdf, QuadratureRule};
use kyleback::pde::ModelParams;
use kyleback::potential::TailMode;
use kyleback::{ConvexPotential, Error, XiGrid};
use proptest::prelude::*;

fn params(gamma: f64, l_cap: f64) -> ModelParams<f64> {
    ModelParams::new(1.0, 0.5, gamma, l_cap).unwrap()
}

fn rule() -> QuadratureRule<f64> {
    QuadratureRule::gauss_hermite(64).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn linear_map_representation_is_closed_form(frac in 0.05f64..0.95, m in -3.0f64..3.0, gamma in 0.01f64..0.5) {
        // Keep γσ²T·l below 1/2.
        let l_cap = 0.45 / (gamma * 0.25);
        let lambda = frac * l_cap;
        let p = params(gamma, l_cap);
        let grid = XiGrid::default_for(p.sigma, p.horizon);
        let pot = ConvexPotential::from_fn(grid, |x| lambda * x + m, p.l_cap, TailMode::Linear).unwrap();
        let rep = solve_representation(&pot, &p, &rule()).unwrap();
        let v = p.terminal_variance();
        let a = gamma * v * lambda;
        prop_assert!((rep.chi00 + gamma * v * m).abs() < 1e-8);
        prop_assert!((rep.price00 - m).abs() < 1e-8);
        let gamma00 = -(1.0 - a).ln() / (2.0 * gamma) - gamma * v * m * m / 2.0;
        prop_assert!((rep.gamma00 - gamma00).abs() < 1e-7, "{} vs {}", rep.gamma00, gamma00);
    }

    #[test]
    fn constant_shift_moves_minimizer(c in -4.0f64..4.0, amp in 0.1f64..2.0) {
        let p = params(0.2, 4.0);
        let grid = XiGrid::default_for(p.sigma, p.horizon);
        let base = ConvexPotential::from_fn(grid, |x| amp * (x / 0.7).tanh() + 0.3 * x, p.l_cap, TailMode::Constant).unwrap();
        let moved = base.shifted(c).unwrap();
        let r0 = solve_representation(&base, &p, &rule()).unwrap();
        let r1 = solve_representation(&moved, &p, &rule()).unwrap();
        prop_assert!((r1.chi00 - (r0.chi00 - p.gamma * p.terminal_variance() * c)).abs() < 1e-9);
        prop_assert!((r1.price00 - r0.price00 - c).abs() < 1e-9);
        prop_assert!((r1.centered_chi() - r0.centered_chi()).abs() < 1e-12);
    }
}

#[test]
fn derivative_of_g_matches_finite_difference() {
    let p = params(0.3, 4.0);
    let grid = XiGrid::default_for(p.sigma, p.horizon);
    let pot = ConvexPotential::from_fn(grid, |x| (x / 0.5).tanh() + 0.5 * x, p.l_cap, TailMode::Constant).unwrap();
    let r = rule();
    let h = 1e-5;
    for z in [-1.0, -0.2, 0.0, 0.4, 1.3] {
        let (_, g1, g2) = eval_g_and_derivatives(&pot, &p, &r, z).unwrap();
        let (gp, gp1, _) = eval_g_and_derivatives(&pot, &p, &r, z + h).unwrap();
        let (gm, gm1, _) = eval_g_and_derivatives(&pot, &p, &r, z - h).unwrap();
        assert!(((gp - gm) / (2.0 * h) - g1).abs() < 1e-6 * (1.0 + g1.abs()));
        assert!(((gp1 - gm1) / (2.0 * h) - g2).abs() < 1e-5 * (1.0 + g2.abs()));
        assert!(g2 > 0.0);
    }
    let rep = solve_representation(&pot, &p, &r).unwrap();
    assert!(rep.minimizer_residual.abs() < 1e-8);
}

#[test]
fn gaussian_density_cdf() {
    let grid = XiGrid::new(4.0, 801).unwrap();
    let f: Vec<f64> = grid.nodes().iter().map(|x| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()).collect();
    let d = TerminalDensity::from_values(grid.clone(), f).unwrap();
    // The grid truncates at ±4, so the oracle is the truncated normal.
    let lo = normal_cdf(-4.0);
    let truncated = |x: f64| (normal_cdf(x) - lo) / (1.0 - 2.0 * lo);
    for (i, x) in grid.nodes().iter().enumerate() {
        assert!((d.cdf_nodes()[i] - truncated(*x)).abs() < 1e-9, "x = {x}");
        assert!((d.sf_nodes()[i] - truncated(-*x)).abs() < 1e-9);
    }
    assert!((d.cdf(0.123) - truncated(0.123)).abs() < 1e-7);
}

#[test]
fn neutral_iteration_is_one_quantile_transform() {
    let priors = [
        BeliefDistribution::gaussian(1.0, 1.0).unwrap(),
        BeliefDistribution::uniform(10.0, 20.0).unwrap(),
        BeliefDistribution::truncated_lognormal(0.0, 0.5, 0.2, 5.0).unwrap(),
    ];
    for nu in priors {
        let p = params(0.0, nu.admissible_slope(1.0, 0.5));
        let fp = picard_solve(&nu, &p, &PicardConfig::default()).unwrap();
        assert_eq!(fp.iterations, 1);
        assert!(fp.converged);
        let s = p.sigma * p.horizon.sqrt();
        for x in fp.potential.grid().nodes() {
            if x.abs() <= 4.0 * s {
                let exact = if x <= 0.0 {
                    nu.quantile(normal_cdf(x / s)).unwrap()
                } else {
                    nu.quantile_upper(normal_cdf(-x / s)).unwrap()
                };
                assert!((fp.potential.eval_g(x) - exact).abs() < 1e-6, "{:?} at {x}", nu.kind());
            }
        }
    }
}

#[test]
fn matched_prior_gives_identity() {
    // With ν equal to the law of σB_T the transport map is the identity.
    let nu = BeliefDistribution::gaussian(0.0, 0.5).unwrap();
    let p = params(0.0, 4.0);
    let fp = picard_solve(&nu, &p, &PicardConfig::default()).unwrap();
    for x in fp.potential.grid().nodes() {
        if x.abs() <= 2.0 {
            assert!((fp.potential.eval_g(x) - x).abs() < 1e-8);
        }
    }
}

#[test]
fn gaussian_fixed_point() {
    let s = common::gaussian();
    assert!(s.fp.converged);
    assert!(*s.fp.residuals.last().unwrap() <= 1e-6);
    assert!(s.fp.fixed_point_residual <= 1e-6);
    for m in &s.fp.density_masses {
        assert!((m - 1.0).abs() <= 1e-6);
    }
    assert!((s.fp.representation.price00 - 1.0).abs() < 1e-6);
}

#[test]
fn uniform_residuals_shrink() {
    let s = common::uniform();
    assert!(s.fp.converged && s.fp.iterations <= 200);
    let r = &s.fp.residuals;
    assert!(r[r.len() - 1] < 1e-3 * r[0]);
    for x in s.fp.potential.grid().nodes() {
        let g = s.fp.potential.eval_g(x);
        assert!((10.0..=20.0).contains(&g));
    }
}

#[test]
fn warm_start_converges_immediately() {
    let s = common::uniform();
    let cfg = PicardConfig { initial: Some(s.fp.potential.clone()), ..PicardConfig::default() };
    let fp = picard_solve(&s.nu, &s.params, &cfg).unwrap();
    assert_eq!(fp.iterations, 1);
}

#[test]
fn damping_reaches_same_map() {
    let s = common::uniform();
    let cfg = PicardConfig { damping: 0.5, tol: 1e-8, ..PicardConfig::default() };
    let fp = picard_solve(&s.nu, &s.params, &cfg).unwrap();
    assert!(fp.converged);
    assert!(fp.iterations > s.fp.iterations);
    for x in fp.potential.grid().nodes() {
        if x.abs() <= 1.0 {
            assert!((fp.potential.eval_g(x) - s.fp.potential.eval_g(x)).abs() < 1e-5);
        }
    }
    let bad = PicardConfig { damping: 0.0, ..PicardConfig::default() };
    assert!(matches!(picard_solve(&s.nu, &s.params, &bad), Err(Error::Params(_))));
}

#[test]
fn iteration_cap_reports_unconverged() {
    let s = common::uniform();
    let cfg = PicardConfig { max_iter: 2, tol: 1e-14, ..PicardConfig::default() };
    let fp = picard_solve(&s.nu, &s.params, &cfg).unwrap();
    assert!(!fp.converged);
    assert_eq!(fp.iterations, 2);
}

#[test]
fn slope_cap_breach_carries_iterate() {
    let nu = BeliefDistribution::gaussian(1.0, 1.0).unwrap();
    let p = params(0.1, 1.0);
    match picard_solve(&nu, &p, &PicardConfig::default()) {
        Err(Error::SlopeBudget { iteration, checkpoint, slope, .. }) => {
            assert_eq!(iteration, 1);
            assert_eq!(checkpoint.len(), XiGrid::default_for(0.5, 1.0).len());
            assert!(slope > 1.0);
        }
        other => panic!("expected slope budget error, got {other:?}"),
    }
}

#[test]
fn budget_and_coverage_errors() {
    assert!(matches!(ModelParams::<f64>::new(1.0, 0.5, 0.1, 40.0), Err(Error::Budget(_))));
    let nu = BeliefDistribution::gaussian(1.0, 1.0).unwrap();
    let p = params(0.1, 4.0);
    let cfg = PicardConfig { grid: Some(XiGrid::new(0.5, 101).unwrap()), ..PicardConfig::default() };
    assert!(matches!(picard_solve(&nu, &p, &cfg), Err(Error::GridCoverage(_))));
}

#[test]
fn terminal_density_of_zero_map_is_gaussian() {
    let p = params(0.1, 4.0);
    let grid = XiGrid::default_for(p.sigma, p.horizon);
    let pot = ConvexPotential::zero(grid.clone(), p.l_cap);
    let rep = solve_representation(&pot, &p, &rule()).unwrap();
    let d = terminal_density(&pot, &rep, &p).unwrap();
    let v = p.terminal_variance();
    for (x, f) in grid.nodes().iter().zip(d.values()) {
        let exact = (-x * x / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
        assert!((f - exact).abs() < 1e-10);
    }
}
