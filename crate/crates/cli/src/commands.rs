use std::path::{Path, PathBuf};

use kyleback::equilibrium::{conditional_value_cdf, impact_and_depth, prior_distance};
use kyleback::fixed_point::{anchor_of, picard_solve, solve_representation, terminal_density};
use kyleback::numerics::QuadratureRule;
use kyleback::pde::{build_surface, check_system_residual, check_system_residual_within, Field};
use kyleback::simulate::{
    ks_critical, ks_statistic, last_step_scale, martingale_check, mean_pin_gap, mean_price_gap, simulate_bridge,
    simulate_xi0, BatchConfig, Mode, Target,
};
use kyleback::{ConvexPotential, Error, PricingSurface, RepresentationPoint, TerminalDensity};
use serde_json::{json, Value};

use crate::config::Resolved;

pub const EXIT_INVALID: u8 = 1;
pub const EXIT_NON_CONVERGENCE: u8 = 2;
pub const EXIT_BUDGET: u8 = 3;
pub const EXIT_MISSING: u8 = 4;
pub const EXIT_GATES: u8 = 5;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Budget(_) | Error::SlopeBudget { .. } => EXIT_BUDGET,
            Error::NonConvergence(_) => EXIT_NON_CONVERGENCE,
            _ => EXIT_INVALID,
        };
        Failure::new(code, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

pub struct Context {
    pub run: Resolved,
    pub out: PathBuf,
    pub quiet: bool,
}

impl Context {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::new(EXIT_INVALID, format!("cannot write {}: {e}", path.display()))
}

fn num(x: f64) -> String {
    format!("{x:.15e}")
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Outcome {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_failure(path, e))?;
    w.write_record(header).map_err(|e| io_failure(path, e))?;
    for row in rows {
        w.write_record(row.into_iter().map(num)).map_err(|e| io_failure(path, e))?;
    }
    w.flush().map_err(|e| io_failure(path, e))
}

fn write_json(path: &Path, value: &Value) -> Outcome {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_failure(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_failure(path, e))
}

/// Creates the output directory and echoes the resolved config into it.
pub fn prepare(ctx: &Context) -> Outcome {
    std::fs::create_dir_all(&ctx.out).map_err(|e| io_failure(&ctx.out, e))?;
    let value = serde_json::to_value(&ctx.run.config).map_err(|e| Failure::new(EXIT_INVALID, e.to_string()))?;
    write_json(&ctx.path("config.resolved.json"), &value)
}

fn representation_json(rep: &RepresentationPoint) -> Value {
    json!({
        "chi00": rep.chi00,
        "gamma00": rep.gamma00,
        "price00": rep.price00,
        "minimizer_residual": rep.minimizer_residual,
    })
}

pub fn fixed_point(ctx: &Context) -> Outcome {
    let run = &ctx.run;
    ctx.say("fixed point: running Picard iteration");
    let fp = match picard_solve(&run.nu, &run.params, &run.picard()) {
        Ok(fp) => fp,
        Err(Error::SlopeBudget { checkpoint, iteration, node, slope, l_cap }) => {
            let path = ctx.path("g_checkpoint.csv");
            write_csv(&path, &["xi", "g"], checkpoint.iter().map(|(x, g)| vec![*x, *g]))?;
            return Err(Failure::new(
                EXIT_BUDGET,
                format!(
                    "slope {slope:.6e} at node {node} exceeds l_cap {l_cap:.6e} at iteration {iteration}; iterate saved to {}",
                    path.display()
                ),
            ));
        }
        Err(e) => return Err(e.into()),
    };
    fp.potential.write_csv(&ctx.path("g_star.csv"))?;
    write_csv(
        &ctx.path("residuals.csv"),
        &["iteration", "weighted_residual", "sup_residual", "normalization", "trapezoid_mass"],
        (0..fp.iterations).map(|k| {
            vec![(k + 1) as f64, fp.residuals[k], fp.sup_residuals[k], fp.normalizations[k], fp.density_masses[k]]
        }),
    )?;
    let grid = fp.mu_density.grid();
    write_csv(
        &ctx.path("mu_density.csv"),
        &["xi", "density", "cdf"],
        (0..grid.len()).map(|i| vec![grid.node(i), fp.mu_density.values()[i], fp.mu_density.cdf_nodes()[i]]),
    )?;
    let summary = json!({
        "converged": fp.converged,
        "iterations": fp.iterations,
        "final_residual": fp.residuals.last().copied(),
        "final_sup_residual": fp.sup_residuals.last().copied(),
        "fixed_point_residual": fp.fixed_point_residual,
        "representation": representation_json(&fp.representation),
        "cdf_clamps": { "lower": fp.clamps.lower, "upper": fp.clamps.upper },
        "assumption_violating_prior": run.nu.assumption_violating(),
    });
    write_json(&ctx.path("fixed_point_summary.json"), &summary)?;
    ctx.say(format!(
        "fixed point: {} after {} iterations, residual {:.3e}",
        if fp.converged { "converged" } else { "not converged" },
        fp.iterations,
        fp.residuals.last().copied().unwrap_or(f64::NAN)
    ));
    if fp.converged {
        Ok(())
    } else {
        Err(Failure::new(
            EXIT_NON_CONVERGENCE,
            format!("no convergence within {} iterations (artifacts written)", run.config.fixed_point.max_iter),
        ))
    }
}

/// Everything downstream of a saved fixed point.
struct Stage {
    pot: ConvexPotential,
    rep: RepresentationPoint,
    density: TerminalDensity,
    surface: PricingSurface,
}

fn load_stage(ctx: &Context) -> Result<Stage, Failure> {
    let run = &ctx.run;
    let path = ctx.path("g_star.csv");
    if !path.exists() {
        return Err(Failure::new(
            EXIT_MISSING,
            format!("missing artifact {}; run the fixed-point command first", path.display()),
        ));
    }
    let pot = ConvexPotential::read_csv(&path, run.params.l_cap, run.tail())?;
    let rule = QuadratureRule::gauss_hermite(run.config.grids.quadrature_order)?;
    let rep = solve_representation(&pot, &run.params, &rule)?;
    let density = terminal_density(&pot, &rep, &run.params)?;
    let anchor = anchor_of(&rep, &density, &run.params);
    ctx.say("building the pricing surface");
    let surface = build_surface(&pot, &run.params, run.config.grids.t_steps, Some(anchor))?;
    Ok(Stage { pot, rep, density, surface })
}

fn write_surfaces(ctx: &Context, surface: &PricingSurface) -> Outcome {
    let r = &ctx.run.config.report;
    for field in [Field::R, Field::P, Field::Gamma, Field::Chi] {
        surface.write_field_csv(field, &ctx.path(&format!("surface_{}.csv", field.name())), r.t_stride, r.xi_stride)?;
    }
    Ok(())
}

fn residual_json(r: &kyleback::pde::SystemResidual<f64>) -> Value {
    json!({ "gamma": r.gamma, "chi": r.chi, "identity": r.identity, "pricing": r.pricing })
}

pub fn pde(ctx: &Context) -> Outcome {
    let stage = load_stage(ctx)?;
    let s = &stage.surface;
    write_surfaces(ctx, s)?;
    let summary = json!({
        "t_steps": s.steps(),
        "xi_nodes": s.xi_grid.len(),
        "invariants_hold": s.check_invariants().is_ok(),
        "residual": residual_json(&check_system_residual(s)),
        "residual_within_2": residual_json(&check_system_residual_within(s, 2.0)),
        "anchor_gaps": { "price": s.anchor_gaps.0, "gamma": s.anchor_gaps.1 },
        "max_substeps": s.substeps.iter().copied().max(),
        "penalty_hits": s.penalty_hits,
    });
    write_json(&ctx.path("pde_summary.json"), &summary)?;
    ctx.say("pde: surfaces written");
    Ok(())
}

fn probe_name(t: f64, x: f64) -> String {
    format!("conditional_cdf_t{t}_xi{x}.csv")
}

pub fn report(ctx: &Context) -> Outcome {
    let run = &ctx.run;
    let horizon = run.params.horizon;
    if let Some([t, x]) = run.config.report.probes.iter().find(|[t, _]| *t >= horizon) {
        return Err(Failure::new(
            EXIT_INVALID,
            format!("probe ({t}, {x}) refused: at t = T the value is known exactly, a point mass at g(xi)"),
        ));
    }
    let stage = load_stage(ctx)?;
    let s = &stage.surface;
    write_surfaces(ctx, s)?;
    let eq = impact_and_depth(s, &stage.pot, &stage.rep);
    let cfg = &run.config.report;
    let m = s.steps();
    let rows = (0..=m)
        .filter(|k| k % cfg.t_stride.max(1) == 0 || *k == m)
        .flat_map(|k| (0..eq.xi.len()).step_by(cfg.xi_stride.max(1)).map(move |i| (k, i)))
        .map(|(k, i)| {
            vec![
                eq.t_grid[k],
                eq.xi[i],
                eq.lambda_grid[[k, i]],
                eq.depth_grid[[k, i]],
                eq.lambda_drift_grid[[k, i]],
                eq.depth_drift_grid[[k, i]],
                eq.kernel_diagonal[[k, i]],
            ]
        });
    write_csv(
        &ctx.path("impact_depth.csv"),
        &["t", "xi", "lambda", "depth", "lambda_drift", "depth_drift", "kernel_diagonal"],
        rows,
    )?;
    let mut probes = Vec::new();
    for &[t, x] in &cfg.probes {
        let law = conditional_value_cdf(s, &stage.pot, t, x)?;
        write_csv(
            &ctx.path(&probe_name(t, x)),
            &["v", "cdf", "prior_cdf"],
            law.cdf.xs().iter().zip(law.cdf.ys()).map(|(&v, &f)| vec![v, f, run.nu.cdf(v)]),
        )?;
        probes.push(json!({
            "t": t,
            "xi": x,
            "price": s.p_at(t, x),
            "mean": law.mean,
            "median": law.median()?,
            "iqr": law.iqr()?,
            "prior_distance": prior_distance(&law, &run.nu, 2000),
        }));
    }
    let prior_iqr = run.nu.quantile(0.75)? - run.nu.quantile(0.25)?;
    let summary = json!({
        "representation": representation_json(&stage.rep),
        "max_lambda_drift": eq.max_lambda_drift(),
        "min_depth_drift": eq.min_depth_drift(),
        "reciprocity_error": eq.reciprocity_error(),
        "prior_iqr": prior_iqr,
        "probes": probes,
    });
    write_json(&ctx.path("report_summary.json"), &summary)?;
    ctx.say("report: written");
    Ok(())
}

fn gate(name: &str, value: f64, threshold: f64, pass: bool) -> Value {
    json!({ "name": name, "value": value, "threshold": threshold, "pass": pass })
}

pub fn simulate(ctx: &Context) -> Outcome {
    let stage = load_stage(ctx)?;
    let run = &ctx.run;
    let sc = &run.config.simulate;
    let base = BatchConfig {
        n_paths: sc.n_paths,
        n_steps: sc.n_steps,
        seed: sc.seed,
        checkpoints: sc.checkpoints,
        ..BatchConfig::default()
    };
    ctx.say(format!("simulate: {} unconditioned paths", sc.n_paths));
    let xi0 = simulate_xi0(&stage.surface, &base)?;
    // A separate stream family for the bridge batch.
    let bridge_cfg = BatchConfig { seed: sc.seed.wrapping_add(1), mode: Mode::Bridge(Target::Prior), ..base };
    ctx.say(format!("simulate: {} bridge paths", sc.n_paths));
    let bridge = simulate_bridge(&stage.surface, &stage.pot, &run.nu, &bridge_cfg)?;

    let cdf = |x: f64| stage.density.cdf(x);
    let crit = ks_critical(sc.n_paths, sc.ks_alpha);
    let ks0 = ks_statistic(&xi0.xi_terminal, cdf);
    let mart = martingale_check(&xi0, &stage.surface);
    let ksb = ks_statistic(&bridge.xi_terminal, cdf);
    let price_gap = mean_price_gap(&bridge);
    let scale = last_step_scale(&bridge, &run.params);

    let enough = sc.n_paths >= sc.min_paths;
    let gates = [
        gate("xi0_terminal_ks", ks0, crit, ks0 < crit),
        gate("martingale_max_abs_z", mart.max_abs_z, sc.max_abs_z, mart.max_abs_z <= sc.max_abs_z),
        gate("bridge_terminal_ks", ksb, crit, ksb < crit),
        gate("price_pinning", price_gap, sc.pin_factor * scale, price_gap <= sc.pin_factor * scale),
    ];
    let failed: Vec<String> = if enough {
        gates
            .iter()
            .filter(|g| g["pass"] == json!(false))
            .map(|g| g["name"].as_str().unwrap_or("").to_string())
            .collect()
    } else {
        Vec::new()
    };
    let note = (!enough).then(|| {
        format!("insufficient sample: {} paths is below min_paths = {}; gates skipped", sc.n_paths, sc.min_paths)
    });
    let summary = json!({
        "seed": sc.seed,
        "n_paths": sc.n_paths,
        "n_steps": sc.n_steps,
        "xi0": {
            "ks": ks0,
            "checkpoint_times": mart.times,
            "checkpoint_means": mart.means,
            "z_scores": mart.z_scores,
            "grid_exits": xi0.exits,
        },
        "bridge": {
            "ks": ksb,
            "mean_price_gap": price_gap,
            "mean_pin_gap": mean_pin_gap(&bridge),
            "last_step_scale": scale,
            "grid_exits": bridge.exits,
        },
        "ks_critical": crit,
        "gates": if enough { Value::Array(gates.to_vec()) } else { Value::Null },
        "note": note,
    });
    write_json(&ctx.path("simulation_summary.json"), &summary)?;
    if let Some(n) = &note {
        ctx.say(format!("simulate: {n}"));
    }
    if failed.is_empty() {
        ctx.say("simulate: done");
        Ok(())
    } else {
        Err(Failure::new(EXIT_GATES, format!("statistical gates failed: {}", failed.join(", "))))
    }
}

pub fn all(ctx: &Context) -> Outcome {
    fixed_point(ctx)?;
    pde(ctx)?;
    report(ctx)?;
    simulate(ctx)
}
