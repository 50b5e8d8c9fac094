//! Picard iteration `g ← F_ν⁻¹ ∘ F_φ` for the equilibrium Brenier map.
//!
//! Each step needs the terminal law `μ^φ` of the unconditioned state. Its density
//! is explicit once `χ(0,0)` and `Γ(0,0)` are known, and those two numbers come
//! from minimizing the strongly convex function
//! `G_g(z) = E[exp(z²/(2σ²T) + γ g̃(z + σB_T))]`.

use crate::beliefs::BeliefDistribution;
use crate::numerics::{
    cumulative_trapezoid_corrected, gaussian_expectation, minimize_convex_1d, trapezoid, Extrapolation, MonotoneCurve,
    QuadratureRule,
};
use crate::pde::{Anchor, ModelParams};
use crate::potential::{ConvexPotential, TailMode, XiGrid};
use crate::{lit, to_f64, Error, Result, Scalar};

/// CDF values are clamped to `[CDF_CLAMP, 1 − CDF_CLAMP]` before `F_ν⁻¹`.
pub const CDF_CLAMP: f64 = 1e-12;

/// `χ(0,0)`, `Γ(0,0)` and `P(0,0)` of a potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepresentationPoint<S> {
    pub chi00: S,
    pub gamma00: S,
    /// `P(0,0) = E_μ[g]`.
    pub price00: S,
    /// `G_g'(chi00)`.
    pub minimizer_residual: S,
    centered_chi: S,
    centered_gamma: S,
}

impl<S: Scalar> RepresentationPoint<S> {
    /// `χ(0,0)` for `g − g(0)`.
    pub fn centered_chi(&self) -> S {
        self.centered_chi
    }

    /// `Γ(0,0)` for `g − g(0)`.
    pub fn centered_gamma(&self) -> S {
        self.centered_gamma
    }
}

/// `(G, G', G'')` at `z`.
pub fn eval_g_and_derivatives<S: Scalar>(
    pot: &ConvexPotential<S>,
    params: &ModelParams<S>,
    rule: &QuadratureRule<S>,
    z: S,
) -> Result<(S, S, S)> {
    params.require_representation_budget()?;
    let var = params.terminal_variance();
    let gamma = params.gamma;
    let q = z * z / (lit::<S>(2.0) * var);
    let base = |y: S| (q + gamma * pot.eval_phi(y)).exp();
    let score = |y: S| z / var + gamma * pot.eval_g(y);
    let g = gaussian_expectation(base, rule, z, params.sigma * params.horizon.sqrt())?;
    let g1 = gaussian_expectation(|y| score(y) * base(y), rule, z, params.sigma * params.horizon.sqrt())?;
    let g2 = gaussian_expectation(
        |y| {
            let s = score(y);
            (s * s + S::one() / var + gamma * pot.slope_at(y)) * base(y)
        },
        rule,
        z,
        params.sigma * params.horizon.sqrt(),
    )?;
    Ok((g, g1, g2))
}

/// Tilted expectation `E[h(z+σB) e^{γψ(z+σB)}] / E[e^{γψ(z+σB)}]` and the log of
/// the normalizer, for the centered map `h = g − g(0)`.
fn tilted<S: Scalar>(
    pot: &ConvexPotential<S>,
    params: &ModelParams<S>,
    rule: &QuadratureRule<S>,
    z: S,
) -> Result<(S, S)> {
    let sd = params.sigma * params.horizon.sqrt();
    let g0 = pot.g0();
    let mut expo = Vec::with_capacity(rule.order());
    let mut hs = Vec::with_capacity(rule.order());
    for &x in rule.nodes() {
        let y = z + sd * x;
        let e = params.gamma * pot.eval_psi(y);
        if !e.is_finite() {
            return Err(Error::NonFinite { what: format!("tilt exponent at y = {}", to_f64(y)) });
        }
        expo.push(e);
        hs.push(pot.eval_g(y) - g0);
    }
    let m = expo.iter().copied().fold(S::neg_infinity(), S::max);
    let mut num = S::zero();
    let mut den = S::zero();
    for ((&w, &e), &h) in rule.weights().iter().zip(&expo).zip(&hs) {
        let wt = w * (e - m).exp();
        den = den + wt;
        num = num + wt * h;
    }
    Ok((num / den, m + den.ln()))
}

/// Minimizes `G_g` and evaluates `Γ(0,0)` and `P(0,0)` at the minimizer.
///
/// The minimization runs on `h = g − g(0)`; the exact shift identity
/// `G_{h+c}(z) = G_h(z + γσ²T c)` maps the result back to `g`.
pub fn solve_representation<S: Scalar>(
    pot: &ConvexPotential<S>,
    params: &ModelParams<S>,
    rule: &QuadratureRule<S>,
) -> Result<RepresentationPoint<S>> {
    params.require_representation_budget()?;
    let var = params.terminal_variance();
    let gamma = params.gamma;
    let sd = params.sigma * params.horizon.sqrt();
    let g0 = pot.g0();

    let (chi_c, gamma_c, price_c) = if gamma == S::zero() {
        let psi_mean = gaussian_expectation(|y| pot.eval_psi(y), rule, S::zero(), sd)?;
        let h_mean = gaussian_expectation(|y| pot.eval_g(y) - g0, rule, S::zero(), sd)?;
        (S::zero(), psi_mean, h_mean)
    } else {
        let log_g = |z: S| -> S {
            match tilted(pot, params, rule, z) {
                Ok((_, lse)) => z * z / (lit::<S>(2.0) * var) + lse,
                Err(_) => S::nan(),
            }
        };
        let dlog_g = |z: S| -> S {
            match tilted(pot, params, rule, z) {
                Ok((mean_h, _)) => z / var + gamma * mean_h,
                Err(_) => S::nan(),
            }
        };
        let tol = lit::<S>(1e-11).max(S::epsilon() * lit(1e4));
        let (chi_c, _) = minimize_convex_1d(log_g, dlog_g, S::zero(), tol, 200)?;
        let gamma_c = gaussian_expectation(|y| (gamma * pot.eval_psi(y)).exp_m1(), rule, chi_c, sd)?.ln_1p() / gamma;
        let (price_c, _) = tilted(pot, params, rule, chi_c)?;
        (chi_c, gamma_c, price_c)
    };

    let shift = gamma * var * g0;
    let chi00 = chi_c - shift;
    let gamma00 = gamma_c + g0 * chi_c - gamma * var * g0 * g0 / lit(2.0);
    let price00 = price_c + g0;
    let (_, g1, _) = eval_g_and_derivatives(pot, params, rule, chi00)?;
    Ok(RepresentationPoint {
        chi00,
        gamma00,
        price00,
        minimizer_residual: g1,
        centered_chi: chi_c,
        centered_gamma: gamma_c,
    })
}

/// Terminal density `f_φ` of the unconditioned state on the potential grid.
#[derive(Debug, Clone)]
pub struct TerminalDensity<S> {
    grid: XiGrid<S>,
    f: Vec<S>,
    cdf: Vec<S>,
    sf: Vec<S>,
    curve: MonotoneCurve<S>,
    normalization: S,
}

impl<S: Scalar> TerminalDensity<S> {
    /// Normalizes density values on `grid` and accumulates both tails.
    ///
    /// Fails with a grid-coverage error if the raw mass is off by more than `1e−3`.
    pub fn from_values(grid: XiGrid<S>, mut f: Vec<S>) -> Result<Self> {
        if f.len() != grid.len() {
            return Err(Error::Params("density length differs from grid".into()));
        }
        if let Some(i) = f.iter().position(|v| !v.is_finite() || *v < S::zero()) {
            return Err(Error::NonFinite { what: format!("density node {i}") });
        }
        let h = grid.spacing();
        let raw = cumulative_trapezoid_corrected(&f, h);
        let z = raw[raw.len() - 1];
        if !((z - S::one()).abs() <= lit(1e-3)) {
            return Err(Error::GridCoverage(format!(
                "terminal density integrates to {z} on [-{0}, {0}]; widen the grid",
                grid.half_width()
            )));
        }
        for v in f.iter_mut() {
            *v = *v / z;
        }
        let mut cdf = cumulative_trapezoid_corrected(&f, h);
        let rev: Vec<S> = f.iter().rev().copied().collect();
        let mut sf: Vec<S> = cumulative_trapezoid_corrected(&rev, h);
        sf.reverse();
        let mut run = S::zero();
        for c in cdf.iter_mut() {
            run = run.max(c.max(S::zero()).min(S::one()));
            *c = run;
        }
        let mut run = S::zero();
        for s in sf.iter_mut().rev() {
            run = run.max(s.max(S::zero()).min(S::one()));
            *s = run;
        }
        let curve = MonotoneCurve::new(grid.nodes(), cdf.clone(), Extrapolation::Clamp)?;
        Ok(Self { grid, f, cdf, sf, curve, normalization: z })
    }

    pub fn grid(&self) -> &XiGrid<S> {
        &self.grid
    }

    pub fn values(&self) -> &[S] {
        &self.f
    }

    /// `F_φ` at the nodes.
    pub fn cdf_nodes(&self) -> &[S] {
        &self.cdf
    }

    /// `1 − F_φ` at the nodes, accumulated from the right.
    pub fn sf_nodes(&self) -> &[S] {
        &self.sf
    }

    /// `F_φ` as a monotone curve.
    pub fn cdf_curve(&self) -> &MonotoneCurve<S> {
        &self.curve
    }

    pub fn cdf(&self, x: S) -> S {
        self.curve.eval(x)
    }

    /// Raw mass before renormalization.
    pub fn normalization(&self) -> S {
        self.normalization
    }

    /// Plain trapezoid mass of the stored (renormalized) values.
    pub fn trapezoid_mass(&self) -> S {
        trapezoid(&self.f, self.grid.spacing())
    }
}

/// `f(y) = (2πσ²T)^{−1/2} exp(γφ(y) − γΓ(0,0) − (χ(0,0) − y)²/(2σ²T))`.
///
/// Evaluated in centered form so the values depend on `g` only through `g − g(0)`.
pub fn terminal_density<S: Scalar>(
    pot: &ConvexPotential<S>,
    rep: &RepresentationPoint<S>,
    params: &ModelParams<S>,
) -> Result<TerminalDensity<S>> {
    let var = params.terminal_variance();
    let gamma = params.gamma;
    let c = S::one() / (lit::<S>(2.0 * std::f64::consts::PI) * var).sqrt();
    let grid = pot.grid().clone();
    let f: Vec<S> = (0..grid.len())
        .map(|i| {
            let y = grid.node(i);
            let d = rep.centered_chi - y;
            c * (gamma * pot.psi_nodes()[i] - gamma * rep.centered_gamma - d * d / (lit::<S>(2.0) * var)).exp()
        })
        .collect();
    TerminalDensity::from_values(grid, f)
}

/// Nodes whose CDF value hit the clamp.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClampCount {
    pub lower: usize,
    pub upper: usize,
}

/// `F_ν⁻¹(F_φ(ξᵢ))` at every node, using the survival side above the median.
pub fn brenier_values<S: Scalar>(
    density: &TerminalDensity<S>,
    nu: &BeliefDistribution<S>,
) -> Result<(Vec<S>, ClampCount)> {
    let eps = lit::<S>(CDF_CLAMP);
    let half = lit::<S>(0.5);
    let mut clamps = ClampCount::default();
    let mut out = Vec::with_capacity(density.cdf.len());
    for (&c, &s) in density.cdf.iter().zip(&density.sf) {
        let v = if c <= half {
            if c < eps {
                clamps.lower += 1;
            }
            nu.quantile(c.max(eps))?
        } else {
            if s < eps {
                clamps.upper += 1;
            }
            nu.quantile_upper(s.max(eps))?
        };
        out.push(v);
    }
    // Guard against one-ulp inversions where the two tails meet.
    for i in 1..out.len() {
        if out[i] < out[i - 1] {
            out[i] = out[i - 1];
        }
    }
    Ok((out, clamps))
}

/// One Brenier update `g = F_ν⁻¹ ∘ F_φ` as a potential.
pub fn brenier_update<S: Scalar>(
    density: &TerminalDensity<S>,
    nu: &BeliefDistribution<S>,
    l_cap: S,
    tail: TailMode,
) -> Result<ConvexPotential<S>> {
    let (g, _) = brenier_values(density, nu)?;
    ConvexPotential::new(density.grid().clone(), g, l_cap, tail)
}

/// Settings of [`picard_solve`].
#[derive(Debug, Clone)]
pub struct PicardConfig<S> {
    pub tol: S,
    pub max_iter: usize,
    /// Relaxation `ω` in `g ← (1−ω)g + ω·update`.
    pub damping: S,
    /// Defaults to `XiGrid::default_for(σ, T)`.
    pub grid: Option<XiGrid<S>>,
    pub quadrature_order: usize,
    pub tail: TailMode,
    /// Warm start; defaults to `g ≡ 0`.
    pub initial: Option<ConvexPotential<S>>,
}

impl<S: Scalar> Default for PicardConfig<S> {
    fn default() -> Self {
        Self {
            tol: lit(1e-6),
            max_iter: 200,
            damping: S::one(),
            grid: None,
            quadrature_order: 64,
            tail: TailMode::Constant,
            initial: None,
        }
    }
}

/// Outcome of the Picard iteration.
#[derive(Debug, Clone)]
pub struct FixedPointResult<S> {
    /// `∂ξφ*`.
    pub potential: ConvexPotential<S>,
    /// Weighted sup-norm change per iteration (the convergence metric).
    pub residuals: Vec<S>,
    /// Unweighted sup-norm change per iteration.
    pub sup_residuals: Vec<S>,
    pub iterations: usize,
    pub converged: bool,
    /// `μ^{φ*}`.
    pub mu_density: TerminalDensity<S>,
    /// Representation point of `φ*`.
    pub representation: RepresentationPoint<S>,
    /// Raw terminal-density mass before renormalization, per iteration.
    pub normalizations: Vec<S>,
    /// Trapezoid mass after renormalization, per iteration.
    pub density_masses: Vec<S>,
    /// `sup |g* − F_ν⁻¹(F_{φ*})|` over the nodes.
    pub fixed_point_residual: S,
    pub clamps: ClampCount,
}

impl<S: Scalar> FixedPointResult<S> {
    /// Targets for the surface at `t = 0`: `P(0,0)` and the `Γ(0,0)` that makes
    /// `G(0,0,T,·)` equal the normalized terminal density.
    pub fn anchor(&self, params: &ModelParams<S>) -> Anchor<S> {
        anchor_of(&self.representation, &self.mu_density, params)
    }
}

/// Surface targets at `t = 0` for a potential whose representation point and
/// terminal density are already known.
pub fn anchor_of<S: Scalar>(
    rep: &RepresentationPoint<S>,
    density: &TerminalDensity<S>,
    params: &ModelParams<S>,
) -> Anchor<S> {
    let shift = if params.gamma > S::zero() { density.normalization().ln() / params.gamma } else { S::zero() };
    Anchor { price00: rep.price00, gamma00: rep.gamma00 + shift }
}

/// Weight `exp(−ξ²/(2σ²T))` of the convergence metric: the standard normal density
/// at `ξ/(σ√T)` relative to its peak.
pub fn residual_weights<S: Scalar>(grid: &XiGrid<S>, params: &ModelParams<S>) -> Vec<S> {
    let var = params.terminal_variance();
    grid.nodes().into_iter().map(|x| (-(x * x) / (lit::<S>(2.0) * var)).exp()).collect()
}

fn weighted_sup<S: Scalar>(a: &[S], b: &[S], w: &[S]) -> (S, S) {
    let mut ws = S::zero();
    let mut us = S::zero();
    for ((x, y), wi) in a.iter().zip(b).zip(w) {
        let d = (*x - *y).abs();
        ws = ws.max(*wi * d);
        us = us.max(d);
    }
    (ws, us)
}

/// Runs `g^{n+1} = F_ν⁻¹(F_{φⁿ})` from `g⁰ = 0` (or a warm start).
///
/// Returns a result with `converged = false` when `max_iter` is reached; errors
/// on slope-budget breaches (with the iterate attached) and on sustained growth
/// of the residual.
pub fn picard_solve<S: Scalar>(
    nu: &BeliefDistribution<S>,
    params: &ModelParams<S>,
    cfg: &PicardConfig<S>,
) -> Result<FixedPointResult<S>> {
    params.require_representation_budget()?;
    if !(cfg.damping > S::zero() && cfg.damping <= S::one()) {
        return Err(Error::Params(format!("damping must lie in (0,1], got {}", cfg.damping)));
    }
    let rule = QuadratureRule::gauss_hermite(cfg.quadrature_order)?;
    let grid = cfg.grid.clone().unwrap_or_else(|| XiGrid::default_for(params.sigma, params.horizon));
    let weights = residual_weights(&grid, params);
    let mut pot = match &cfg.initial {
        Some(p) => {
            if p.grid() != &grid {
                return Err(Error::Params("warm start lives on a different grid".into()));
            }
            p.clone()
        }
        None => ConvexPotential::zero(grid.clone(), params.l_cap),
    };

    let mut residuals = Vec::new();
    let mut sup_residuals = Vec::new();
    let mut normalizations = Vec::new();
    let mut density_masses = Vec::new();
    let mut converged = false;
    let mut growth = 0usize;
    let omega = cfg.damping;

    for iter in 1..=cfg.max_iter {
        let rep = solve_representation(&pot, params, &rule)?;
        let dens = terminal_density(&pot, &rep, params)?;
        normalizations.push(dens.normalization());
        density_masses.push(dens.trapezoid_mass());
        let (update, _) = brenier_values(&dens, nu)?;
        let next: Vec<S> = pot
            .values()
            .iter()
            .zip(&update)
            .map(|(&old, &new)| if omega == S::one() { new } else { (S::one() - omega) * old + omega * new })
            .collect();
        let (wres, ures) = weighted_sup(&next, pot.values(), &weights);
        pot = ConvexPotential::new(grid.clone(), next, params.l_cap, cfg.tail).map_err(|e| match e {
            Error::SlopeBudget { node, slope, l_cap, checkpoint, .. } => {
                Error::SlopeBudget { iteration: iter, node, slope, l_cap, checkpoint }
            }
            other => other,
        })?;
        if let Some(&prev) = residuals.last() {
            growth = if wres > prev { growth + 1 } else { 0 };
        }
        residuals.push(wres);
        sup_residuals.push(ures);
        // With γ = 0 the terminal law does not depend on φ: one update is exact.
        if wres <= cfg.tol || params.gamma == S::zero() {
            converged = true;
            break;
        }
        if growth >= 5 {
            return Err(Error::NonConvergence(format!(
                "residual grew over 5 consecutive iterations (last {})",
                to_f64(wres)
            )));
        }
    }

    let representation = solve_representation(&pot, params, &rule)?;
    let mu_density = terminal_density(&pot, &representation, params)?;
    let (again, clamps) = brenier_values(&mu_density, nu)?;
    let (_, fixed_point_residual) = weighted_sup(&again, pot.values(), &weights);
    Ok(FixedPointResult {
        iterations: residuals.len(),
        potential: pot,
        residuals,
        sup_residuals,
        converged,
        mu_density,
        representation,
        normalizations,
        density_masses,
        fixed_point_residual,
        clamps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams<f64> {
        ModelParams::new(1.0, 0.5, 0.1, 4.0).unwrap()
    }

    #[test]
    fn zero_map_representation() {
        let p = params();
        let grid = XiGrid::default_for(p.sigma, p.horizon);
        let pot = ConvexPotential::zero(grid, p.l_cap);
        let rule = QuadratureRule::gauss_hermite(64).unwrap();
        let rep = solve_representation(&pot, &p, &rule).unwrap();
        assert!(rep.chi00.abs() < 1e-12);
        assert_eq!(rep.gamma00, 0.0);
        let (g, g1, g2) = eval_g_and_derivatives(&pot, &p, &rule, 1.0).unwrap();
        assert!((g - 2f64.exp()).abs() < 1e-8);
        assert!((g1 - 4.0 * 2f64.exp()).abs() < 1e-8);
        assert!(g2 > 0.0);
    }

    #[test]
    fn coverage_error_on_narrow_grid() {
        let grid = XiGrid::new(0.5f64, 101).unwrap();
        let f: Vec<f64> =
            grid.nodes().iter().map(|x: &f64| (-x * x / 0.5).exp() / (0.5 * std::f64::consts::PI).sqrt()).collect();
        assert!(matches!(TerminalDensity::from_values(grid, f), Err(Error::GridCoverage(_))));
    }
}
