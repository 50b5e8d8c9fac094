mod common;

use kyleback::numerics::normal_cdf;
use kyleback::simulate::{
    ks_critical, ks_statistic, last_step_scale, mean_and_se, mean_pin_gap, recover_xi_from_flow, simulate_bridge,
    simulate_xi0, wealth_decomposition, BatchConfig, Mode, Target,
};
use kyleback::Error;

fn cfg(n_paths: usize, n_steps: usize, seed: u64, mode: Mode<f64>) -> BatchConfig<f64> {
    BatchConfig { n_paths, n_steps, seed, mode, ..BatchConfig::default() }
}

#[test]
fn batches_are_reproducible() {
    let s = common::uniform();
    let a = simulate_xi0(&s.surface, &cfg(200, 64, 11, Mode::Unconditioned)).unwrap();
    let b = simulate_xi0(&s.surface, &cfg(200, 64, 11, Mode::Unconditioned)).unwrap();
    assert_eq!(a.xi_terminal, b.xi_terminal);
    // Each path owns its stream, so a larger batch extends a smaller one.
    let c = simulate_xi0(&s.surface, &cfg(400, 64, 11, Mode::Unconditioned)).unwrap();
    assert_eq!(&c.xi_terminal[..200], &a.xi_terminal[..]);
    let d = simulate_xi0(&s.surface, &cfg(200, 64, 12, Mode::Unconditioned)).unwrap();
    assert_ne!(a.xi_terminal, d.xi_terminal);
}

#[test]
fn neutral_terminal_state_is_brownian() {
    let s = common::neutral();
    let batch = simulate_xi0(&s.surface, &cfg(10_000, 64, 3, Mode::Unconditioned)).unwrap();
    let sd = 0.5;
    let ks = ks_statistic(&batch.xi_terminal, |x| normal_cdf(x / sd));
    assert!(ks < ks_critical(10_000, 0.01), "ks {ks}");
    let sq: Vec<f64> = batch.xi_terminal.iter().map(|x| x * x).collect();
    let (var, se) = mean_and_se(&sq);
    assert!((var - sd * sd).abs() < 3.0 * se, "var {var} se {se}");
}

#[test]
fn recorded_flow_recovers_state() {
    let s = common::uniform();
    let c = BatchConfig { record_paths: true, ..cfg(20, 128, 5, Mode::Bridge(Target::Prior)) };
    let batch = simulate_bridge(&s.surface, &s.fp.potential, &s.nu, &c).unwrap();
    for path in batch.paths.as_ref().unwrap() {
        let (xi, exits) = recover_xi_from_flow(&s.surface, &batch.dt_grid, &path.y).unwrap();
        assert_eq!(exits, 0);
        for (a, b) in xi.iter().zip(&path.xi) {
            assert!((a - b).abs() < 1e-12);
        }
        for (k, (x, p)) in path.xi.iter().zip(&path.p).enumerate() {
            assert!((s.surface.p_at(batch.dt_grid[k], *x) - p).abs() < 1e-12);
        }
    }
    assert!(recover_xi_from_flow(&s.surface, &batch.dt_grid[..3], &[0.0]).is_err());
}

#[test]
fn bridge_requires_bridge_mode() {
    let s = common::uniform();
    let r = simulate_bridge(&s.surface, &s.fp.potential, &s.nu, &cfg(10, 16, 0, Mode::Unconditioned));
    assert!(matches!(r, Err(Error::Params(_))));
    let b = simulate_xi0(&s.surface, &cfg(10, 16, 0, Mode::Unconditioned)).unwrap();
    assert!(wealth_decomposition(&b, &s.fp.potential, &s.fp.representation, &s.params).is_err());
}

#[test]
fn wealth_gap_has_strong_order_one_half() {
    let s = common::uniform();
    let gaps: Vec<f64> = [128usize, 256, 512, 1024]
        .iter()
        .map(|&n| {
            let b = simulate_bridge(
                &s.surface,
                &s.fp.potential,
                &s.nu,
                &cfg(2000, n, 8, Mode::Bridge(Target::Fixed(15.0))),
            )
            .unwrap();
            wealth_decomposition(&b, &s.fp.potential, &s.fp.representation, &s.params).unwrap().mean_gap()
        })
        .collect();
    for w in gaps.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.2..=1.7).contains(&ratio), "gaps {gaps:?}");
    }
}

#[test]
fn pin_gap_tracks_last_step() {
    let s = common::uniform();
    let scaled: Vec<f64> = [128usize, 256, 512]
        .iter()
        .map(|&n| {
            let b = simulate_bridge(&s.surface, &s.fp.potential, &s.nu, &cfg(2000, n, 9, Mode::Bridge(Target::Prior)))
                .unwrap();
            mean_pin_gap(&b) / last_step_scale(&b, &s.params)
        })
        .collect();
    for w in scaled.windows(2) {
        let ratio = w[0] / w[1];
        assert!((0.7..=1.4).contains(&ratio), "{scaled:?}");
    }
}

#[test]
fn ks_helpers() {
    // Midpoint quantiles of U(0,1) sit at distance 1/(2n).
    let n = 100;
    let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    assert!((ks_statistic(&xs, |x| x) - 0.5 / n as f64).abs() < 1e-15);
    assert!((ks_critical(10_000, 0.01) - 0.0163).abs() < 1e-12);
    assert!((ks_critical(100, 0.05) - 0.136).abs() < 1e-12);
}
